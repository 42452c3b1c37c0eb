#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "wee/context_store.hpp"
#include "wee/errors.hpp"
#include "wee/handler_factory.hpp"
#include "wee/handlers/mock.hpp"
#include "wee/harness.hpp"
#include "wee/parser.hpp"

namespace wee::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

/// Waits until every listed position has started, or the instance ends. A
/// position listed n times must start n times.
class StartWatch {
 public:
  StartWatch(Instance& inst, std::vector<std::string> positions) : wanted_(positions.begin(), positions.end()) {
    inst.log().add_observer([this](const EventRecord& e) {
      std::lock_guard lk(mutex_);
      if (e.kind == EventKind::ActivityStart && e.position) {
        if (const auto it = wanted_.find(e.position->value); it != wanted_.end()) wanted_.erase(it);
      }
      if (e.kind == EventKind::InstanceFinish || e.kind == EventKind::InstanceStop) ended_ = true;
      cv_.notify_all();
    });
  }

  /// True when all positions started before the instance ended.
  bool wait(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mutex_);
    cv_.wait_for(lk, timeout, [&] { return wanted_.empty() || ended_; });
    return wanted_.empty();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::multiset<std::string> wanted_;
  bool ended_ = false;
};

HandlerSpec handler_spec(const PatternCase& c, const WorkflowAst& ast, std::uint64_t seed) {
  const json h = c.spec.value("handler", json::object());
  HandlerSpec spec;
  spec.kind = h.value("kind", ast.handler.empty() ? std::string("mock") : ast.handler);
  spec.script = c.script;
  spec.seed = seed;
  if (h.contains("events")) spec.events_path = (c.dir / h.at("events").get<std::string>()).string();
  spec.trigger_mode = h.value("trigger_mode", spec.trigger_mode);
  spec.max_depth = h.value("max_depth", spec.max_depth);
  return spec;
}

ResumeOptions resume_options(const json& scenario, const WorkflowAst& ast) {
  ResumeOptions ro;
  for (const auto& range : scenario.value("skip", json::array())) {
    const auto text = range.get<std::string>();
    const auto dots = text.find("..");
    const auto first = text.substr(0, dots);
    const auto last = dots == std::string::npos ? first : text.substr(dots + 2);
    for (auto& p : position_range(ast, PositionId(first), PositionId(last))) ro.skip.insert(std::move(p));
  }
  for (const auto& [branch, pos] : scenario.value("overrides", json::object()).items()) {
    ro.overrides.emplace(branch, PositionId(pos.get<std::string>()));
  }
  return ro;
}

RunRecord run_once(const PatternCase& c, const std::shared_ptr<const WorkflowAst>& ast, std::uint64_t seed) {
  RunRecord rec;
  rec.seed = seed;
  const json scenario = c.spec.value("scenario", json{{"type", "run"}});
  const auto type = scenario.value("type", "run");

  EngineOptions opts;
  opts.instance_id = c.file_stem;
  opts.clock = fixed_wall_clock();

  TraceView view;
  view.initial_context = ContextStore(ast->context).snapshot().values;

  auto bundle = make_handler(handler_spec(c, *ast, seed), ast, opts);
  auto* mock = dynamic_cast<MockHandler*>(&bundle.handler());

  Instance inst(ast, bundle.handler(), opts);
  std::optional<StartWatch> watch;
  if (type != "run") watch.emplace(inst, scenario.value("when_started", std::vector<std::string>{}));
  inst.start();
  if (watch) {
    const auto timeout = std::chrono::milliseconds(scenario.value("timeout_ms", 5000));
    if (!watch->wait(timeout)) rec.error = "stop point never reached";
    inst.stop();
  }
  RunResult result = inst.wait();
  if (mock) {
    view.observations["spawned"] = mock->spawned();
    view.observations["spawns_completed_at_end"] = mock->spawns_completed();
  }
  view.events = inst.log().records();
  view.final_context = inst.store().snapshot().values;

  if (type == "stop_resume" && !rec.error) {
    if (result.lifecycle != Lifecycle::Stopped || result.error) {
      rec.error = "instance did not stop cleanly" + (result.error ? ": " + *result.error : std::string());
    } else {
      Instance resumed(ast, bundle.handler(), inst.save(), resume_options(scenario, *ast), opts);
      result = resumed.run();
      auto more = resumed.log().records();
      view.events.insert(view.events.end(), more.begin(), more.end());
      view.final_context = resumed.store().snapshot().values;
    }
  }
  bundle.drain();
  if (result.error) rec.error = *result.error;

  view.lifecycle = result.lifecycle;
  rec.lifecycle = result.lifecycle;
  rec.invariant_violations = check_trace_invariants(view.events);
  rec.replay_ok = replay_context(view.initial_context, view.events) == view.final_context;
  for (const auto& a : c.spec.at("assertions")) {
    try {
      rec.assertions.push_back(evaluate_assertion(a, view));
    } catch (const std::exception& e) {
      rec.assertions.push_back({a.value("kind", "?"), false, e.what()});
    }
  }
  rec.events = std::move(view.events);
  return rec;
}

bool run_passed(const RunRecord& r) {
  return !r.error && r.replay_ok && r.invariant_violations.empty() &&
         std::all_of(r.assertions.begin(), r.assertions.end(), [](const AssertionResult& a) { return a.passed; });
}

std::string first_failure(const RunRecord& r) {
  std::ostringstream os;
  os << "seed " << r.seed << ": ";
  if (r.error) return os.str() + *r.error;
  if (!r.invariant_violations.empty()) return os.str() + r.invariant_violations.front();
  if (!r.replay_ok) return os.str() + "context replay mismatch";
  for (const auto& a : r.assertions) {
    if (!a.passed) return os.str() + a.kind + ": " + a.detail;
  }
  return os.str() + "ok";
}

/// The level a passing case demonstrates, from how it is built: a stub is
/// orchestrated; reliance on a specialised handler, handler-side spawning or
/// a region skipped on resume is handler/external; auxiliary workflow state
/// is a modified workflow; anything else is direct.
SupportLevel demonstrated_level(const PatternCase& c, const WorkflowAst& ast) {
  if (!c.workflow_source) return SupportLevel::Orchestrated;
  const json h = c.spec.value("handler", json::object());
  const auto kind = h.value("kind", ast.handler.empty() ? std::string("mock") : ast.handler);
  const json scenario = c.spec.value("scenario", json::object());
  bool spawns = false;
  for (const auto& a : c.spec.at("assertions")) {
    if (a.value("kind", "") == "observation") spawns = true;
  }
  if ((kind != "mock" && kind != "http") || spawns || !scenario.value("skip", json::array()).empty()) {
    return SupportLevel::HandlerExternal;
  }
  if (!c.spec.value("auxiliary", json::array()).empty()) return SupportLevel::Modified;
  return SupportLevel::Direct;
}

std::string level_mark(SupportLevel level) {
  switch (level) {
    case SupportLevel::Direct: return "++";
    case SupportLevel::Modified: return "+";
    case SupportLevel::HandlerExternal: return "*";
    case SupportLevel::Orchestrated: return "x";
  }
  return "?";
}

json summary_json(const EngineSummary& s) { return {{"engine", s.engine}, {"+", s.plus}, {"+/-", s.mixed}, {"-", s.minus}}; }

}  // namespace

PatternCase load_case(const fs::path& dir, const std::string& stem) {
  PatternCase c;
  c.dir = dir;
  c.file_stem = stem;
  c.spec = read_json(dir / (stem + ".assert.json"));
  c.name = c.spec.at("name").get<std::string>();
  c.pattern_class = c.spec.at("class").get<std::string>();
  c.expected = support_level_from(c.spec.at("expected").get<std::string>());
  if (!c.spec.contains("assertions") || !c.spec.at("assertions").is_array()) {
    throw Error(stem + ": assertions must be an array");
  }
  const auto wee = dir / (stem + ".wee");
  if (fs::exists(wee)) c.workflow_source = slurp(wee);
  const auto script = dir / (stem + ".script.json");
  if (fs::exists(script)) c.script = read_json(script);

  if (c.expected == SupportLevel::Orchestrated) {
    if (c.workflow_source) throw Error(stem + ": orchestrated case carries a workflow");
    for (const auto& a : c.spec.at("assertions")) {
      if (a.value("kind", "") != "unsupported") throw Error(stem + ": orchestrated case may only assert unsupported");
    }
  } else if (!c.workflow_source) {
    throw Error(stem + ": missing " + wee.string());
  }
  return c;
}

std::vector<PatternCase> load_corpus(const fs::path& corpus) {
  if (!fs::is_directory(corpus)) throw Error("no corpus directory " + corpus.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(corpus)) {
    const auto name = entry.path().filename().string();
    const std::string suffix = ".assert.json";
    if (entry.is_regular_file() && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<PatternCase> cases;
  for (const auto& f : files) {
    const auto name = f.filename().string();
    cases.push_back(load_case(f.parent_path(), name.substr(0, name.size() - 12)));
  }
  return cases;
}

PatternResult run_pattern(const PatternCase& c, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  PatternResult out;
  out.name = c.name;
  out.pattern_class = c.pattern_class;
  out.expected = c.expected;

  auto finish = [&] {
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  };

  if (!c.workflow_source) {
    out.achieved = SupportLevel::Orchestrated;
    out.passed = true;
    const auto& a = c.spec.at("assertions");
    out.message = a.empty() ? "unsupported by design" : a.front().value("reason", "unsupported by design");
    return finish();
  }

  std::shared_ptr<const WorkflowAst> ast;
  try {
    auto parsed = std::make_shared<WorkflowAst>(parse(*c.workflow_source));
    if (const auto diags = validate(*parsed); !diags.empty()) {
      out.message = "invalid workflow: " + diags.front().message;
      return finish();
    }
    ast = std::move(parsed);
  } catch (const Error& e) {
    out.message = std::string("parse error: ") + e.what();
    return finish();
  }

  const std::size_t runs = options.runs ? options.runs : c.spec.value("runs", std::size_t{1});
  const std::uint64_t seed = c.spec.value("seed", std::uint64_t{1});
  out.passed = true;
  for (std::size_t i = 0; i < runs; ++i) {
    RunRecord rec;
    try {
      rec = run_once(c, ast, seed + i);
    } catch (const std::exception& e) {
      rec.seed = seed + i;
      rec.error = e.what();
      rec.replay_ok = false;
    }
    ++out.replay_checks;
    if (!rec.replay_ok) ++out.replay_mismatches;
    const bool ok = run_passed(rec);
    if (!ok && out.passed) out.message = first_failure(rec);
    out.passed = out.passed && ok;
    if (!options.keep_traces) rec.events.clear();
    out.runs.push_back(std::move(rec));
  }
  if (out.passed) {
    out.achieved = demonstrated_level(c, *ast);
    out.message = std::to_string(runs) + (runs == 1 ? " run" : " runs");
  }
  return finish();
}

CoverageReport run_all(const fs::path& corpus, bool parallel, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cases = load_corpus(corpus);

  CoverageReport report;
  std::map<std::string, const PatternCase*> by_name;
  for (const auto& c : cases) {
    if (!find_reference(c.name)) throw Error("case '" + c.name + "' is not a pattern of the coverage table");
    if (!by_name.emplace(c.name, &c).second) throw Error("duplicate case '" + c.name + "'");
  }
  for (const auto& ref : reference_table()) {
    if (!by_name.count(ref.name)) report.missing.push_back(ref.name);
  }
  if (!report.missing.empty()) {
    std::string list;
    for (const auto& m : report.missing) list += (list.empty() ? "" : ", ") + m;
    throw Error("missing case files for: " + list);
  }

  std::vector<PatternResult> results(reference_table().size());
  if (parallel) {
    std::vector<std::future<PatternResult>> futures;
    for (const auto& ref : reference_table()) {
      futures.push_back(std::async(std::launch::async, [c = by_name.at(ref.name), &options] { return run_pattern(*c, options); }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < reference_table().size(); ++i) {
      results[i] = run_pattern(*by_name.at(reference_table()[i].name), options);
    }
  }

  report.table_matches = true;
  report.all_passed = true;
  report.recount.engine = "WEE (recount)";
  report.published_cells.engine = "WEE (table cells)";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& ref = reference_table()[i];
    const auto& r = results[i];
    CellComparison cell{ref.name, ref.pattern_class, ref.level, r.achieved, r.achieved == ref.level};
    report.table_matches = report.table_matches && cell.matches;
    report.all_passed = report.all_passed && r.passed;
    report.cells.push_back(cell);
    report.replay_checks += r.replay_checks;
    report.replay_mismatches += r.replay_mismatches;

    auto tally = [](EngineSummary& s, SupportLevel l) {
      if (l == SupportLevel::Direct) ++s.plus;
      else if (l == SupportLevel::Orchestrated) ++s.minus;
      else ++s.mixed;
    };
    tally(report.published_cells, ref.level);
    if (r.achieved) {
      tally(report.recount, *r.achieved);
      switch (*r.achieved) {
        case SupportLevel::Direct: ++report.direct; break;
        case SupportLevel::Modified: ++report.modified; break;
        case SupportLevel::HandlerExternal: ++report.handler_external; break;
        case SupportLevel::Orchestrated: ++report.orchestrated; break;
      }
    }
  }
  report.results = std::move(results);
  report.published = published_summary();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

json report_to_json(const CoverageReport& report) {
  json patterns = json::array();
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    const auto& cell = report.cells[i];
    json failures = json::array();
    for (const auto& run : r.runs) {
      if (!run_passed(run)) failures.push_back(first_failure(run));
    }
    patterns.push_back({{"class", r.pattern_class},
                        {"name", r.name},
                        {"expected", to_string(r.expected)},
                        {"published", cell.published ? json(to_string(*cell.published)) : json(nullptr)},
                        {"achieved", r.achieved ? json(to_string(*r.achieved)) : json(nullptr)},
                        {"matches_table", cell.matches},
                        {"assertions_passed", r.passed},
                        {"runs", r.runs.size()},
                        {"seconds", r.seconds},
                        {"message", r.message},
                        {"failures", failures}});
  }
  json third = json::array();
  for (const auto& s : third_party_summaries()) third.push_back(summary_json(s));
  const bool agree = report.recount.plus == report.published.plus && report.recount.mixed == report.published.mixed &&
                     report.recount.minus == report.published.minus;
  return {{"patterns", patterns},
          {"counts",
           {{"direct", report.direct},
            {"modified", report.modified},
            {"handler_external", report.handler_external},
            {"orchestrated", report.orchestrated},
            {"total", report.direct + report.modified + report.handler_external + report.orchestrated}}},
          {"aggregate",
           {{"recount", summary_json(report.recount)},
            {"table_cells", summary_json(report.published_cells)},
            {"published_summary", summary_json(report.published)},
            {"summary_matches_recount", agree}}},
          {"third_party", third},
          {"table_matches", report.table_matches},
          {"all_passed", report.all_passed},
          {"replay", {{"checks", report.replay_checks}, {"mismatches", report.replay_mismatches}}},
          {"seconds", report.seconds}};
}

std::string render_table(const CoverageReport& report) {
  std::ostringstream os;
  const int cw = 40, nw = 56;
  os << std::left << std::setw(cw) << "Pattern class" << std::setw(nw) << "Pattern name"
     << " dir  mod  h/e  orch  table   assertions\n";
  os << std::string(cw + nw + 40, '-') << '\n';
  std::string last_class;
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    const auto& cell = report.cells[i];
    if (!last_class.empty() && r.pattern_class != last_class) os << std::string(cw + nw + 40, '-') << '\n';
    os << std::setw(cw) << (r.pattern_class == last_class ? "" : r.pattern_class) << std::setw(nw) << r.name;
    last_class = r.pattern_class;
    for (auto level : {SupportLevel::Direct, SupportLevel::Modified, SupportLevel::HandlerExternal,
                       SupportLevel::Orchestrated}) {
      os << ' ' << std::setw(4) << (r.achieved == level ? level_mark(level) : "");
    }
    os << ' ' << std::setw(7) << (cell.matches ? "same" : "DIFF") << ' ' << (r.passed ? "pass" : "FAIL: " + r.message)
       << '\n';
  }
  os << std::string(cw + nw + 40, '-') << '\n';
  os << "Legend: ++ directly supported, + modified workflow, * handler/external, x orchestrated instances\n";
  os << "Levels: " << report.direct << " direct, " << report.modified << " modified, " << report.handler_external
     << " handler/external, " << report.orchestrated << " orchestrated (total "
     << report.direct + report.modified + report.handler_external + report.orchestrated << ")\n";
  os << "Per-pattern levels match the published table: " << (report.table_matches ? "yes" : "NO") << '\n';
  os << "Context replay: " << report.replay_checks - report.replay_mismatches << "/" << report.replay_checks
     << " runs reproduce the final context\n\n";

  auto row = [&](const EngineSummary& s) {
    os << "  " << std::setw(28) << s.engine << std::right << std::setw(4) << s.plus << std::setw(6) << s.mixed
       << std::setw(4) << s.minus << std::left << '\n';
  };
  os << "Aggregate (+ direct; +/- modified or handler/external; - orchestrated)\n";
  os << "  " << std::setw(28) << "" << std::right << std::setw(4) << "+" << std::setw(6) << "+/-" << std::setw(4)
     << "-" << std::left << '\n';
  row(report.recount);
  row(report.published_cells);
  row({"WEE (published summary)", report.published.plus, report.published.mixed, report.published.minus});
  if (report.published_cells.plus != report.published.plus || report.published_cells.mixed != report.published.mixed ||
      report.published_cells.minus != report.published.minus) {
    os << "  note: the published summary row differs from the count of its own per-pattern cells\n";
  }
  os << "\nOther engines, quoted from the published comparison (not re-evaluated)\n";
  for (const auto& s : third_party_summaries()) row(s);
  os << "\nTotal time " << std::fixed << std::setprecision(2) << report.seconds << " s\n";
  return os.str();
}

}  // namespace wee::harness
