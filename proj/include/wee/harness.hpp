#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wee/engine.hpp"
#include "wee/events.hpp"
#include "wee/value.hpp"

namespace wee::harness {

enum class SupportLevel { Direct, Modified, HandlerExternal, Orchestrated };

const char* to_string(SupportLevel level) noexcept;
SupportLevel support_level_from(std::string_view name);
/// "+", "+/-" or "-" as in the aggregate comparison table.
const char* aggregate_symbol(SupportLevel level) noexcept;

/// One row of the published per-pattern coverage table.
struct ReferenceEntry {
  std::string pattern_class;
  std::string name;
  SupportLevel level;
};

/// The published per-pattern table, in table order (43 rows).
const std::vector<ReferenceEntry>& reference_table();
const ReferenceEntry* find_reference(std::string_view name);

/// One row of the published engine comparison (+, +/-, -).
struct EngineSummary {
  std::string engine;
  int plus = 0;
  int mixed = 0;
  int minus = 0;
};

/// The summary row published for this engine.
EngineSummary published_summary();
/// Third-party rows quoted for context only.
const std::vector<EngineSummary>& third_party_summaries();

struct PatternCase {
  std::string name;
  std::string pattern_class;
  SupportLevel expected = SupportLevel::Direct;
  std::filesystem::path dir;
  std::string file_stem;
  std::optional<std::string> workflow_source;
  std::optional<nlohmann::json> script;
  nlohmann::json spec;  // contents of <name>.assert.json
};

/// Reads one case from `<dir>/<stem>.wee`, `.assert.json` and `.script.json`.
/// Throws Error on missing or malformed files and on an orchestrated case
/// that carries a workflow.
PatternCase load_case(const std::filesystem::path& dir, const std::string& stem);
/// Every case under `<corpus>/<class>/`, sorted by path.
std::vector<PatternCase> load_corpus(const std::filesystem::path& corpus);

struct AssertionResult {
  std::string kind;
  bool passed = false;
  std::string detail;
};

/// Everything an assertion may look at after a run.
struct TraceView {
  std::vector<EventRecord> events;
  Lifecycle lifecycle = Lifecycle::Ready;
  Values initial_context;
  Values final_context;
  /// Handler-side facts the engine cannot see (instances spawned by the handler).
  nlohmann::json observations = nlohmann::json::object();
};

AssertionResult evaluate_assertion(const nlohmann::json& assertion, const TraceView& trace);

/// Structural properties every trace satisfies: gap-free sequence numbers, a
/// single terminal record, balanced activities per branch, no activity start
/// after a stop acknowledgement, exclusive critical sections and, for finished
/// instances, every forked branch ended or told it is no longer necessary.
/// A combined stop/resume trace is checked per instance_start segment.
std::vector<std::string> check_trace_invariants(const std::vector<EventRecord>& events);

/// Folds the context_change records of the trace over `initial`.
Values replay_context(const Values& initial, const std::vector<EventRecord>& events);

struct RunRecord {
  std::uint64_t seed = 0;
  Lifecycle lifecycle = Lifecycle::Ready;
  std::vector<AssertionResult> assertions;
  std::vector<std::string> invariant_violations;
  bool replay_ok = true;
  std::optional<std::string> error;
  std::vector<EventRecord> events;
};

struct PatternResult {
  std::string name;
  std::string pattern_class;
  SupportLevel expected = SupportLevel::Direct;
  /// Level the case demonstrated; orchestrated when the case is a stub.
  std::optional<SupportLevel> achieved;
  bool passed = false;
  std::vector<RunRecord> runs;
  std::size_t replay_checks = 0;
  std::size_t replay_mismatches = 0;
  double seconds = 0;
  std::string message;
};

struct RunOptions {
  /// Overrides the run count of every case (0 keeps the case's own).
  std::size_t runs = 0;
  /// Keep the event trace of every run in the result.
  bool keep_traces = false;
};

PatternResult run_pattern(const PatternCase& c, const RunOptions& options = {});

struct CellComparison {
  std::string name;
  std::string pattern_class;
  std::optional<SupportLevel> published;
  std::optional<SupportLevel> achieved;
  bool matches = false;
};

struct CoverageReport {
  std::vector<PatternResult> results;
  std::vector<CellComparison> cells;
  int direct = 0;
  int modified = 0;
  int handler_external = 0;
  int orchestrated = 0;
  /// Aggregate recount of the achieved levels.
  EngineSummary recount;
  /// Aggregate recount of the published per-pattern cells.
  EngineSummary published_cells;
  EngineSummary published;
  bool table_matches = false;
  bool all_passed = false;
  std::size_t replay_checks = 0;
  std::size_t replay_mismatches = 0;
  double seconds = 0;
  std::vector<std::string> missing;
};

/// Runs every case of the corpus. Throws Error if a table pattern has no case.
CoverageReport run_all(const std::filesystem::path& corpus, bool parallel = false, const RunOptions& options = {});

nlohmann::json report_to_json(const CoverageReport& report);
std::string render_table(const CoverageReport& report);

}  // namespace wee::harness
