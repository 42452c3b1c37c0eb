#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "test_util.hpp"
#include "wee/errors.hpp"
#include "wee/harness.hpp"

namespace wee::harness {
namespace {

using nlohmann::json;

struct TraceBuilder {
  std::vector<EventRecord> events;

  TraceBuilder& add(const std::string& branch, EventKind kind, const char* position = nullptr, json detail = json::object()) {
    EventRecord e;
    e.seq = events.size() + 1;
    e.instance = "t";
    e.branch = branch;
    if (position) e.position = PositionId(position);
    e.kind = kind;
    e.detail = std::move(detail);
    events.push_back(std::move(e));
    return *this;
  }
  TraceBuilder& activity(const std::string& branch, const char* position) {
    return add(branch, EventKind::ActivityStart, position).add(branch, EventKind::ActivityEnd, position, {{"outcome", "ok"}});
  }
  TraceView view(Lifecycle l = Lifecycle::Finished) const {
    TraceView v;
    v.events = events;
    v.lifecycle = l;
    return v;
  }
};

bool passes(const json& assertion, const TraceView& view) { return evaluate_assertion(assertion, view).passed; }

TEST(Reference, TableHas43RowsWithRecountedLevels) {
  const auto& table = reference_table();
  ASSERT_EQ(table.size(), 43u);
  std::map<SupportLevel, int> counts;
  std::set<std::string> names;
  for (const auto& e : table) {
    ++counts[e.level];
    names.insert(e.name);
  }
  EXPECT_EQ(names.size(), 43u);
  EXPECT_EQ(counts[SupportLevel::Direct], 24);
  EXPECT_EQ(counts[SupportLevel::Modified], 2);
  EXPECT_EQ(counts[SupportLevel::HandlerExternal], 6);
  EXPECT_EQ(counts[SupportLevel::Orchestrated], 11);
}

TEST(Reference, PublishedRows) {
  const auto wee = published_summary();
  EXPECT_EQ(wee.plus + wee.mixed + wee.minus, 43);
  EXPECT_EQ(wee.plus, 22);
  EXPECT_EQ(wee.mixed, 10);
  ASSERT_EQ(third_party_summaries().size(), 6u);
  for (const auto& row : third_party_summaries()) EXPECT_EQ(row.plus + row.mixed + row.minus, 43) << row.engine;
}

TEST(Reference, LevelNamesRoundTrip) {
  for (auto l : {SupportLevel::Direct, SupportLevel::Modified, SupportLevel::HandlerExternal, SupportLevel::Orchestrated}) {
    EXPECT_EQ(support_level_from(to_string(l)), l);
  }
  EXPECT_THROW(support_level_from("sometimes"), Error);
  EXPECT_STREQ(aggregate_symbol(SupportLevel::Modified), "+/-");
  EXPECT_STREQ(aggregate_symbol(SupportLevel::HandlerExternal), "+/-");
}

TEST(Assertions, OrderAndSequence) {
  TraceBuilder t;
  t.activity("0", "a").activity("0", "b");
  EXPECT_TRUE(passes({{"kind", "order"}, {"before", "a"}, {"after", "b"}}, t.view()));
  EXPECT_FALSE(passes({{"kind", "order"}, {"before", "b"}, {"after", "a"}}, t.view()));
  EXPECT_FALSE(passes({{"kind", "order"}, {"before", "a"}, {"after", "zzz"}}, t.view()));
  EXPECT_TRUE(passes({{"kind", "sequence"}, {"positions", {"a", "b"}}}, t.view()));
  EXPECT_FALSE(passes({{"kind", "sequence"}, {"positions", {"b", "a"}}}, t.view()));
}

TEST(Assertions, OverlappingSpansAreDetected) {
  TraceBuilder t;
  t.add("0.1", EventKind::ActivityStart, "a")
      .add("0.2", EventKind::ActivityStart, "b")
      .add("0.1", EventKind::ActivityEnd, "a")
      .add("0.2", EventKind::ActivityEnd, "b");
  EXPECT_FALSE(passes({{"kind", "activity_spans_disjoint"}}, t.view()));
  EXPECT_FALSE(passes({{"kind", "branch_spans_disjoint"}}, t.view()));

  TraceBuilder u;
  u.activity("0.1", "a").activity("0.2", "b").activity("0.1", "c");
  EXPECT_TRUE(passes({{"kind", "activity_spans_disjoint"}}, u.view()));
  EXPECT_FALSE(passes({{"kind", "branch_spans_disjoint"}}, u.view()));
}

TEST(Assertions, CriticalOverlapIsDetected) {
  TraceBuilder t;
  t.add("0.1", EventKind::CriticalEnter, nullptr, {{"section", "s"}})
      .add("0.2", EventKind::CriticalEnter, nullptr, {{"section", "s"}});
  EXPECT_FALSE(passes({{"kind", "critical_exclusive"}}, t.view()));
  EXPECT_FALSE(check_trace_invariants(t.events).empty());
}

TEST(Assertions, PartialJoinNeedsExactlyKCompleted) {
  const json join{{"wait", "1"}, {"arrived", 1}, {"spawned", 2}, {"children", {"0.1", "0.2"}}};
  TraceBuilder good;
  good.add("0", EventKind::BranchFork, nullptr, {{"child", "0.1"}})
      .add("0", EventKind::BranchFork, nullptr, {{"child", "0.2"}})
      .add("0.1", EventKind::BranchEnd)
      .add("0.2", EventKind::Signal, nullptr, {{"signal", "no_longer_necessary"}})
      .add("0", EventKind::BranchJoin, nullptr, join);
  EXPECT_TRUE(passes({{"kind", "partial_join"}, {"k", 1}}, good.view()));
  EXPECT_FALSE(passes({{"kind", "partial_join"}, {"k", 2}}, good.view()));

  TraceBuilder late = good;
  late.add("0.2", EventKind::ActivityStart, "x");
  EXPECT_FALSE(passes({{"kind", "partial_join"}, {"k", 1}}, late.view()));

  TraceBuilder both;
  both.add("0.1", EventKind::BranchEnd).add("0.2", EventKind::BranchEnd).add("0", EventKind::BranchJoin, nullptr, join);
  EXPECT_FALSE(passes({{"kind", "partial_join"}, {"k", 1}}, both.view()));
}

TEST(Assertions, BetweenWindow) {
  TraceBuilder inside;
  inside.activity("0.1", "open").activity("0.2", "work").activity("0.1", "close");
  const json a{{"kind", "between"}, {"position", "work"}, {"after", "open"}, {"before", "close"}};
  EXPECT_TRUE(passes(a, inside.view()));
  TraceBuilder outside;
  outside.activity("0.1", "open").activity("0.1", "close").activity("0.2", "work");
  EXPECT_FALSE(passes(a, outside.view()));
  TraceBuilder early;
  early.activity("0.2", "work").activity("0.1", "open");
  EXPECT_FALSE(passes(a, early.view()));
}

TEST(Assertions, ContextAndExpr) {
  TraceView v;
  v.final_context = {{"x", Value(3)}, {"ok", Value(true)}};
  EXPECT_TRUE(passes({{"kind", "context"}, {"values", {{"x", 3}}}}, v));
  EXPECT_FALSE(passes({{"kind", "context"}, {"values", {{"x", 4}}}}, v));
  EXPECT_TRUE(passes({{"kind", "expr"}, {"expr", "ok && x > 2"}}, v));
  EXPECT_FALSE(passes({{"kind", "expr"}, {"expr", "x"}}, v));
  EXPECT_THROW(evaluate_assertion({{"kind", "vibes"}}, v), Error);
}

TEST(Invariants, GapAndActivityAfterStop) {
  TraceBuilder t;
  t.add("0", EventKind::InstanceStart)
      .add("0", EventKind::StopAcknowledged)
      .add("0", EventKind::ActivityStart, "a")
      .add("0", EventKind::ActivityEnd, "a")
      .add("0", EventKind::InstanceStop);
  const auto v = check_trace_invariants(t.events);
  ASSERT_FALSE(v.empty());
  EXPECT_NE(v.front().find("after stop"), std::string::npos);

  t.events[3].seq = 10;
  bool gap = false;
  for (const auto& s : check_trace_invariants(t.events)) gap = gap || s.find("gap") != std::string::npos;
  EXPECT_TRUE(gap);
}

TEST(Invariants, ForkWithoutEndOnFinish) {
  TraceBuilder t;
  t.add("0", EventKind::InstanceStart).add("0", EventKind::BranchFork, nullptr, {{"child", "0.1"}}).add("0", EventKind::InstanceFinish);
  EXPECT_FALSE(check_trace_invariants(t.events).empty());
}

TEST(Replay, FoldsChangesInOrder) {
  TraceBuilder t;
  t.add("0", EventKind::ContextChange, "m", {{"name", "x"}, {"old", 0}, {"new", 1}})
      .add("0", EventKind::ContextChange, "m", {{"name", "x"}, {"old", 1}, {"new", 5}})
      .add("0", EventKind::ContextChange, "m", {{"name", "s"}, {"old", nullptr}, {"new", "done"}});
  const Values out = replay_context({{"x", Value(0)}, {"s", Value()}}, t.events);
  EXPECT_EQ(out.at("x"), Value(5));
  EXPECT_EQ(out.at("s"), Value("done"));
}

class CorpusDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / ("wee-harness-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  void write(const std::string& name, const std::string& content) { std::ofstream(dir_ / name) << content; }
  std::filesystem::path dir_;
};

TEST_F(CorpusDir, OrchestratedCaseMayNotCarryAWorkflow) {
  write("x.assert.json", R"({"name": "Multi-Merge", "class": "c", "expected": "orchestrated",
                              "assertions": [{"kind": "unsupported"}]})");
  EXPECT_NO_THROW(load_case(dir_, "x"));
  write("x.wee", "workflow { }");
  EXPECT_THROW(load_case(dir_, "x"), Error);
}

TEST_F(CorpusDir, FailingAssertionIsReportedNotThrown) {
  write("seq.wee", R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    call :a, endpoint: svc
    call :b, endpoint: svc
  })");
  write("seq.script.json", R"({"a": [{}], "b": [{}]})");
  write("seq.assert.json", R"({"name": "Sequence", "class": "Basic Control Flow", "expected": "direct",
                                "assertions": [{"kind": "order", "before": "b", "after": "a"}]})");
  const auto r = run_pattern(load_case(dir_, "seq"));
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.achieved);
  EXPECT_NE(r.message.find("order"), std::string::npos);
}

TEST_F(CorpusDir, EngineErrorCountsAsFailure) {
  write("e.wee", R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    call :a, endpoint: svc
  })");
  write("e.script.json", R"({"a": [{"error": "down"}]})");
  write("e.assert.json", R"({"name": "Sequence", "class": "Basic Control Flow", "expected": "direct",
                              "assertions": []})");
  const auto r = run_pattern(load_case(dir_, "e"));
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.message.find("down"), std::string::npos);
}

TEST_F(CorpusDir, MissingCasesAreReported) {
  std::filesystem::create_directories(dir_ / "basic");
  std::ofstream(dir_ / "basic" / "m.assert.json")
      << R"({"name": "Multi-Merge", "class": "c", "expected": "orchestrated", "assertions": [{"kind": "unsupported"}]})";
  try {
    run_all(dir_);
    FAIL() << "expected missing cases";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("Sequence"), std::string::npos);
  }
}

// The racing patterns must actually exercise both outcomes across seeds.
std::set<std::string> outcomes(const std::string& stem, const std::vector<std::string>& watched) {
  const auto c = load_case(test::source_path("patterns/state_based"), stem);
  RunOptions o;
  o.keep_traces = true;
  const auto r = run_pattern(c, o);
  EXPECT_TRUE(r.passed) << r.message;
  std::set<std::string> seen;
  for (const auto& run : r.runs) {
    for (const auto& e : run.events) {
      if (e.kind == EventKind::ActivityStart && e.position &&
          std::find(watched.begin(), watched.end(), e.position->value) != watched.end()) {
        seen.insert(e.position->value);
      }
    }
  }
  return seen;
}

TEST(Corpus, DeferredChoiceTakesBothBranchesAcrossSeeds) {
  EXPECT_EQ(outcomes("deferred_choice", {"continue_a", "continue_b"}).size(), 2u);
}

TEST(Corpus, MilestoneIsBothHitAndMissedAcrossSeeds) {
  EXPECT_EQ(outcomes("milestone", {"enabled", "not_enabled"}).size(), 2u);
}

TEST(Corpus, FullRunMatchesTable) {
  const auto report = run_all(test::source_path("patterns"));
  EXPECT_TRUE(report.all_passed);
  EXPECT_TRUE(report.table_matches);
  EXPECT_EQ(report.direct + report.modified + report.handler_external + report.orchestrated, 43);
  EXPECT_EQ(report.replay_mismatches, 0u);
  const auto j = report_to_json(report);
  EXPECT_EQ(j.at("aggregate").at("recount").at("+"), 24);
  EXPECT_EQ(j.at("aggregate").at("published_summary").at("+"), 22);
  EXPECT_FALSE(j.at("aggregate").at("summary_matches_recount").get<bool>());
  EXPECT_NE(render_table(report).find("differs"), std::string::npos);
}

}  // namespace
}  // namespace wee::harness
