#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wee/control.hpp"
#include "wee/engine.hpp"
#include "wee/errors.hpp"
#include "wee/handler_factory.hpp"
#include "wee/harness.hpp"
#include "wee/parser.hpp"
#include "wee/saved_instance.hpp"

namespace {

using namespace wee;

struct HandlerArgs {
  std::string kind;
  std::string script;
  std::uint64_t seed = 0;
  std::string events;
  std::string trigger_mode = "persistent";
  int max_depth = 16;
  int timeout_ms = 30'000;
  std::string passthrough_dir;
};

struct ExecArgs {
  std::string log;
  std::string control;
  std::string save;
  std::uint64_t max_iterations = 1'000'000;
  std::string instance_id = "instance";
};

void add_handler_options(CLI::App* cmd, HandlerArgs& h) {
  cmd->add_option("--handler", h.kind, "mock | http | trigger | jump | recursive (default: the workflow's declaration)");
  cmd->add_option("--script", h.script, "JSON script (mock outcomes, jump table, recursive fallback)");
  cmd->add_option("--seed", h.seed, "Seed for scripted delays");
  cmd->add_option("--events", h.events, "Trigger events, JSON Lines of {\"t\", \"key\"}");
  cmd->add_option("--trigger-mode", h.trigger_mode, "persistent | transient");
  cmd->add_option("--max-depth", h.max_depth, "Recursion depth bound");
  cmd->add_option("--timeout-ms", h.timeout_ms, "HTTP request timeout");
  cmd->add_option("--passthrough-dir", h.passthrough_dir, "Where stopped HTTP calls store their results");
}

void add_exec_options(CLI::App* cmd, ExecArgs& e) {
  cmd->add_option("--log", e.log, "Append the event log (JSON Lines) to this file instead of stdout");
  cmd->add_option("--control", e.control, "Control socket path for 'wee stop'");
  cmd->add_option("--save", e.save, "Where a stopped instance is saved");
  cmd->add_option("--max-iterations", e.max_iterations, "Cycle iteration cap");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::shared_ptr<const WorkflowAst> load_workflow(const std::string& path, const std::string& source) {
  WorkflowAst ast;
  try {
    ast = parse(source);
  } catch (const ParseError& e) {
    throw Error(path + ":" + e.what());
  }
  const auto diags = validate(ast);
  if (!diags.empty()) {
    std::ostringstream os;
    for (const auto& d : diags) os << path << ":" << d.location.line << ":" << d.location.column << ": " << d.message << "\n";
    std::string msg = os.str();
    msg.pop_back();
    throw Error(msg);
  }
  return std::make_shared<const WorkflowAst>(std::move(ast));
}

HandlerBundle build_handler(const HandlerArgs& args, const std::shared_ptr<const WorkflowAst>& ast,
                            const std::string& default_passthrough_dir) {
  HandlerSpec spec;
  spec.kind = args.kind.empty() ? ast->handler : args.kind;
  if (!args.script.empty()) {
    try {
      spec.script = nlohmann::json::parse(read_text(args.script));
    } catch (const nlohmann::json::exception& e) {
      throw Error("script '" + args.script + "': " + e.what());
    }
  }
  spec.seed = args.seed;
  spec.events_path = args.events;
  spec.trigger_mode = args.trigger_mode;
  spec.max_depth = args.max_depth;
  spec.timeout_ms = args.timeout_ms;
  spec.passthrough_dir = args.passthrough_dir.empty() ? default_passthrough_dir : args.passthrough_dir;
  EngineOptions nested;
  nested.max_iterations = 1'000'000;
  return make_handler(spec, ast, nested);
}

// Runs a prepared instance to completion, serving the control channel.
int execute(Instance& inst, HandlerBundle& handler, const ExecArgs& exec, const std::string& source_path,
            const std::string& source, const std::string& save_path) {
  std::ofstream log_file;
  if (!exec.log.empty()) {
    log_file.open(exec.log, std::ios::app);
    if (!log_file) throw Error("cannot open log '" + exec.log + "'");
    inst.log().add_sink(log_file);
  } else {
    inst.log().add_sink(std::cout);
  }

  std::unique_ptr<ControlServer> control;
  if (!exec.control.empty()) {
    control = std::make_unique<ControlServer>(exec.control, [&inst](const std::string& cmd) -> std::string {
      if (cmd == "stop") return inst.stop() ? "ack" : "noop";
      if (cmd == "status") return to_string(inst.lifecycle());
      return "error unknown command '" + cmd + "'";
    });
  }

  inst.start();
  const RunResult r = inst.wait();
  handler.drain();

  if (r.lifecycle == Lifecycle::Stopped && !r.error) {
    SavedInstance saved{source_hash(source), std::filesystem::absolute(source_path).string(), inst.save()};
    write_saved(save_path, saved);
    std::cerr << "stopped; saved to " << save_path << "\n";
  } else if (r.error) {
    std::cerr << "error: " << *r.error << "\n";
  } else {
    std::cerr << "finished\n";
  }
  if (control) control->mark_terminal(r.error ? "error" : to_string(r.lifecycle));
  return r.exit_code();
}

int cmd_run(const std::string& file, const HandlerArgs& hargs, const ExecArgs& exec) {
  const std::string source = read_text(file);
  const auto ast = load_workflow(file, source);
  const std::string save = exec.save.empty() ? file + ".saved.json" : exec.save;
  HandlerBundle handler = build_handler(hargs, ast, save + ".passthrough");
  EngineOptions options;
  options.instance_id = exec.instance_id;
  options.max_iterations = exec.max_iterations;
  Instance inst(ast, handler.handler(), options);
  return execute(inst, handler, exec, file, source, save);
}

int cmd_resume(const std::string& saved_path, const std::string& source_override, const HandlerArgs& hargs,
               const ExecArgs& exec, const std::vector<std::string>& regions,
               const std::vector<std::string>& overrides) {
  const SavedInstance saved = read_saved(saved_path);
  const std::string file = source_override.empty() ? saved.source_path : source_override;
  const std::string source = read_text(file);
  if (source_hash(source) != saved.hash) {
    throw Error("workflow source '" + file + "' does not match the saved instance (hash mismatch)");
  }
  const auto ast = load_workflow(file, source);

  ResumeOptions ro;
  for (const auto& region : regions) {
    const auto dots = region.find("..");
    if (dots == std::string::npos) throw Error("skip region must be 'first..last', got '" + region + "'");
    for (auto& p : position_range(*ast, PositionId(region.substr(0, dots)), PositionId(region.substr(dots + 2)))) {
      ro.skip.insert(std::move(p));
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error("override must be 'branch=position', got '" + o + "'");
    ro.overrides[o.substr(0, eq)] = PositionId(o.substr(eq + 1));
  }

  const std::string save = exec.save.empty() ? saved_path : exec.save;
  const std::string default_dir =
      hargs.passthrough_dir.empty() ? saved_path + ".passthrough" : hargs.passthrough_dir;
  HandlerBundle handler = build_handler(hargs, ast, default_dir);
  EngineOptions options;
  options.max_iterations = exec.max_iterations;
  Instance inst(ast, handler.handler(), saved.state, std::move(ro), options);
  return execute(inst, handler, exec, file, source, save);
}

int cmd_stop(const std::string& control) {
  try {
    const std::string reply = control_send(control, "stop");
    if (reply == "ack") {
      std::cout << "stop acknowledged\n";
      return 0;
    }
    if (reply == "noop") {
      std::cout << "instance already stopping\n";
      return 0;
    }
    std::cerr << "unexpected reply: " << reply << "\n";
    return 1;
  } catch (const Error&) {
    if (std::filesystem::exists(tombstone_path(control))) {
      std::string state = read_text(tombstone_path(control));
      state.erase(state.find_last_not_of(" \n\r\t") + 1);
      std::cout << "instance already terminal (" << state << ")\n";
      return 0;
    }
    std::cerr << "error: unknown instance at '" << control << "'\n";
    return 1;
  }
}

const char* kind_label(const Node& node) {
  return std::visit(
      [](const auto& n) -> const char* {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, CallActivity>) return "call";
        else return "manipulate";
      },
      node.kind);
}

int cmd_check(const std::string& file) {
  const std::string source = read_text(file);
  WorkflowAst ast;
  try {
    ast = parse(source);
  } catch (const ParseError& e) {
    std::cerr << file << ":" << e.what() << "\n";
    return 1;
  }
  const auto diags = validate(ast);
  for (const auto& d : diags) std::cerr << file << ":" << d.location.line << ":" << d.location.column << ": " << d.message << "\n";

  std::size_t width = 8;
  for (const auto& p : ast.position_order) width = std::max(width, p.value.size());
  std::cout << std::left << std::setw(static_cast<int>(width) + 2) << "position" << std::setw(12) << "kind"
            << "path\n";
  for (const auto& p : positions(ast)) {
    const NodePath& path = *ast.path_of(p);
    std::string dotted;
    for (std::size_t i = 0; i < path.size(); ++i) dotted += (i ? "." : "") + std::to_string(path[i]);
    std::cout << std::setw(static_cast<int>(width) + 2) << p.value << std::setw(12) << kind_label(ast.node_at(path))
              << dotted << "\n";
  }
  return diags.empty() ? 0 : 1;
}

int cmd_patterns(const std::string& corpus, const std::string& out_dir, bool parallel, std::size_t runs) {
  harness::RunOptions options;
  options.runs = runs;
  const auto report = harness::run_all(corpus, parallel, options);
  const std::string table = harness::render_table(report);
  std::filesystem::create_directories(out_dir);
  const auto out = std::filesystem::path(out_dir);
  std::ofstream(out / "coverage.json") << harness::report_to_json(report).dump(2) << "\n";
  std::ofstream(out / "coverage.txt") << table;
  std::cout << table;
  return report.all_passed && report.table_matches ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wee: workflow execution engine"};
  app.require_subcommand(1);

  std::string file;
  HandlerArgs hargs;
  ExecArgs exec;
  auto* run = app.add_subcommand("run", "Run a workflow");
  run->add_option("file", file, "Workflow source (.wee)")->required();
  add_handler_options(run, hargs);
  add_exec_options(run, exec);
  run->add_option("--instance", exec.instance_id, "Instance id written to the event log");

  std::string stop_control;
  auto* stop = app.add_subcommand("stop", "Stop a running instance");
  stop->add_option("--control", stop_control, "Control socket path of the instance")->required();

  std::string saved_path, source_override;
  std::vector<std::string> regions, overrides;
  auto* resume = app.add_subcommand("resume", "Resume a stopped instance");
  resume->add_option("saved", saved_path, "Saved instance (.json)")->required();
  resume->add_option("--source", source_override, "Workflow source (default: path recorded in the saved file)");
  resume->add_option("--skip-region", regions, "Do not execute activities first..last (source order)");
  resume->add_option("--override", overrides, "Move a branch before resuming: branch=position");
  add_handler_options(resume, hargs);
  add_exec_options(resume, exec);

  std::string check_file;
  auto* check = app.add_subcommand("check", "Validate a workflow and list its positions");
  check->add_option("file", check_file, "Workflow source (.wee)")->required();

  std::string corpus = "patterns", out_dir = ".";
  bool parallel = false;
  std::size_t runs = 0;
  auto* patterns = app.add_subcommand("patterns", "Run the pattern corpus and write coverage.json and coverage.txt");
  patterns->add_option("corpus", corpus, "Corpus directory (default: patterns)");
  patterns->add_option("--out", out_dir, "Directory for the reports");
  patterns->add_flag("--parallel", parallel, "Run cases concurrently");
  patterns->add_option("--runs", runs, "Runs per case, overriding each case's own count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  std::signal(SIGPIPE, SIG_IGN);
  try {
    if (*run) return cmd_run(file, hargs, exec);
    if (*stop) return cmd_stop(stop_control);
    if (*resume) return cmd_resume(saved_path, source_override, hargs, exec, regions, overrides);
    if (*check) return cmd_check(check_file);
    if (*patterns) return cmd_patterns(corpus, out_dir, parallel, runs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
