#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "wee/engine.hpp"
#include "wee/errors.hpp"
#include "wee/handler_factory.hpp"
#include "wee/handlers/trigger.hpp"
#include "wee/harness.hpp"
#include "wee/parser.hpp"
#include "wee/saved_instance.hpp"

namespace py = pybind11;

namespace {

// JSON crosses the boundary through the json module.
py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::handle& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object value_to_python(const wee::Value& v) { return to_python(nlohmann::json(v)); }

py::dict parse_summary(const std::string& source) {
  const auto ast = wee::parse(source);
  py::dict out;
  out["handler"] = ast.handler;
  py::dict endpoints;
  for (const auto& [name, uri] : ast.endpoints) endpoints[py::str(name)] = uri;
  out["endpoints"] = endpoints;
  py::list context;
  for (const auto& c : ast.context) context.append(c.name);
  out["context"] = context;
  py::list positions;
  for (const auto& p : wee::positions(ast)) positions.append(p.value);
  out["positions"] = positions;
  return out;
}

std::vector<std::string> check(const std::string& source) {
  std::vector<std::string> out;
  for (const auto& d : wee::validate(wee::parse(source))) {
    out.push_back(std::to_string(d.location.line) + ":" + std::to_string(d.location.column) + ": " + d.message);
  }
  return out;
}

py::object evaluate(const std::string& expr, const py::dict& env) {
  const auto values = wee::values_from_json(from_python(env));
  return value_to_python(wee::parse_expression(expr).eval(values));
}

py::dict run(const std::string& source, const std::string& handler, const py::object& script, std::uint64_t seed,
             std::uint64_t max_iterations, const std::string& events_path, const std::string& trigger_mode,
             bool fixed_clock) {
  auto ast = std::make_shared<const wee::WorkflowAst>(wee::parse(source));
  const auto diags = wee::validate(*ast);
  if (!diags.empty()) throw wee::Error(diags.front().message);

  wee::HandlerSpec spec;
  spec.kind = handler.empty() ? ast->handler : handler;
  if (!script.is_none()) spec.script = from_python(script);
  spec.seed = seed;
  spec.events_path = events_path;
  spec.trigger_mode = trigger_mode;

  wee::EngineOptions options;
  options.max_iterations = max_iterations;
  if (fixed_clock) options.clock = wee::fixed_wall_clock();

  auto bundle = wee::make_handler(spec, ast);
  wee::Instance inst(ast, bundle.handler(), options);
  wee::RunResult result;
  {
    py::gil_scoped_release release;
    result = inst.run();
    bundle.drain();
  }

  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : inst.log().records()) events.push_back(e);
  py::dict out;
  out["lifecycle"] = std::string(wee::to_string(result.lifecycle));
  out["error"] = result.error ? py::object(py::str(*result.error)) : py::object(py::none());
  out["exit_code"] = result.exit_code();
  out["context"] = to_python(wee::values_to_json(inst.store().snapshot().values));
  out["events"] = to_python(events);
  return out;
}

py::object run_patterns(const std::string& corpus, bool parallel, std::size_t runs) {
  wee::harness::RunOptions options;
  options.runs = runs;
  std::optional<wee::harness::CoverageReport> report;
  {
    py::gil_scoped_release release;
    report = wee::harness::run_all(corpus, parallel, options);
  }
  return to_python(wee::harness::report_to_json(*report));
}

std::optional<std::int64_t> resolve_trigger(const std::string& mode,
                                            const std::vector<std::pair<std::int64_t, std::string>>& events,
                                            const std::string& key, std::int64_t call_time) {
  std::vector<wee::TriggerEvent> list;
  for (const auto& [t, k] : events) list.push_back({t, k});
  return wee::resolve_trigger(wee::trigger_mode_from(mode), list, key, call_time);
}

}  // namespace

PYBIND11_MODULE(_wee, m) {
  m.doc() = "Workflow execution engine";

  const auto& error = py::register_exception<wee::Error>(m, "Error");
  py::register_exception<wee::ParseError>(m, "ParseError", error.ptr());

  m.def("parse", &parse_summary, py::arg("source"),
        "Parse a workflow; returns its handler, endpoints, context names and positions.");
  m.def("check", &check, py::arg("source"), "Undeclared references as 'line:column: message' strings.");
  m.def(
      "format_source", [](const std::string& source) { return wee::print(wee::parse(source)); }, py::arg("source"),
      "Canonical source form.");
  m.def("evaluate", &evaluate, py::arg("expr"), py::arg("env") = py::dict(), "Evaluate an expression.");
  m.def("run", &run, py::arg("source"), py::arg("handler") = "", py::arg("script") = py::none(),
        py::arg("seed") = 0, py::arg("max_iterations") = 1'000'000, py::arg("events_path") = "",
        py::arg("trigger_mode") = "persistent", py::arg("fixed_clock") = false,
        "Run a workflow to completion; returns lifecycle, error, exit code, final context and events.");
  m.def("run_patterns", &run_patterns, py::arg("corpus") = "patterns", py::arg("parallel") = false,
        py::arg("runs") = 0, "Run the pattern corpus; returns the coverage report.");
  m.def("resolve_trigger", &resolve_trigger, py::arg("mode"), py::arg("events"), py::arg("key"),
        py::arg("call_time"), "Fire time of one trigger call, or None if it stays blocked.");
  m.def(
      "source_hash", [](const std::string& s) { return wee::source_hash(s); }, py::arg("source"));
}
