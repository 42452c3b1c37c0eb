#include <gtest/gtest.h>

#include <thread>

#include "test_util.hpp"
#include "wee/errors.hpp"
#include "wee/handlers/mock.hpp"

namespace wee {
namespace {

using test::count_kind;
using test::count_signal;
using test::parse_shared;
using test::started;

MockHandler mock(const char* json, std::uint64_t seed = 0) {
  return MockHandler(mock_script_from_json(nlohmann::json::parse(json)), seed);
}

const char* kSeq = R"(workflow {
  handler "mock"
  endpoint svc: "http://svc"
  context x: 0
  call :a, endpoint: svc
  manipulate :m { x = x + 1 }
  call :b, endpoint: svc, parameters: { v: x * 10 }
})";

TEST(Engine, SequenceRunsInOrder) {
  auto h = mock(R"({"a": [{"result": {"x": 5}}], "b": [{}]})");
  Instance inst(parse_shared(kSeq), h, test::quiet_options());
  const RunResult r = inst.run();
  EXPECT_EQ(r.lifecycle, Lifecycle::Finished);
  EXPECT_EQ(r.exit_code(), 0);
  EXPECT_EQ(started(inst.log().records()), (std::vector<std::string>{"a", "m", "b"}));
  EXPECT_EQ(inst.store().snapshot().values.at("x"), Value(6));
}

TEST(Engine, TraceIsDeterministicWithoutParallel) {
  std::string first;
  for (int i = 0; i < 5; ++i) {
    auto h = mock(R"({"a": [{"result": {"x": 5}}], "b": [{}]})");
    Instance inst(parse_shared(kSeq), h, test::quiet_options());
    std::ostringstream out;
    inst.log().add_sink(out);
    inst.run();
    if (i == 0) first = out.str();
    EXPECT_EQ(out.str(), first);
  }
}

TEST(Engine, HandlerErrorStopsWithError) {
  auto h = mock(R"({"a": [{"error": "boom"}]})");
  Instance inst(parse_shared(kSeq), h, test::quiet_options());
  const RunResult r = inst.run();
  EXPECT_EQ(r.lifecycle, Lifecycle::Stopped);
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("boom"), std::string::npos);
  EXPECT_EQ(r.exit_code(), 1);
  EXPECT_EQ(count_kind(inst.log().records(), EventKind::Error), 1u);
  EXPECT_EQ(count_kind(inst.log().records(), EventKind::InstanceStop), 1u);
}

TEST(Engine, UndeclaredResultIsError) {
  auto h = mock(R"({"a": [{"result": {"nope": 1}}]})");
  Instance inst(parse_shared(kSeq), h, test::quiet_options());
  EXPECT_EQ(inst.run().exit_code(), 1);
}

TEST(Engine, BookingInformsOnlyAboveLimit) {
  for (const auto& [script, expect] : {std::pair{"fixtures/booking_over.json", 1}, {"fixtures/booking_under.json", 0}}) {
    MockHandler h(read_mock_script(test::source_path(script)));
    Instance inst(test::load_fixture("fixtures/booking.wee"), h, test::quiet_options());
    EXPECT_EQ(inst.run().lifecycle, Lifecycle::Finished);
    const auto s = started(inst.log().records());
    EXPECT_EQ(std::count(s.begin(), s.end(), "inform"), expect) << script;
  }
}

const char* kRace = R"(workflow {
  handler "mock"
  endpoint svc: "http://svc"
  context winner: 0
  parallel wait: 1 {
    parallel_branch { call :fast, endpoint: svc }
    parallel_branch { call :slow, endpoint: svc }
    parallel_branch { call :slower, endpoint: svc }
  }
  manipulate :after { winner = 1 }
})";

TEST(Engine, PartialJoinCancelsLosers) {
  auto h = mock(R"({"fast": [{"delay_ms": 1}], "slow": [{"delay_ms": 5000}], "slower": [{"block": true}]})");
  Instance inst(parse_shared(kRace), h, test::quiet_options());
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = inst.run();
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
  EXPECT_EQ(r.lifecycle, Lifecycle::Finished);
  const auto ev = inst.log().records();
  EXPECT_EQ(count_kind(ev, EventKind::BranchEnd), 1u);
  EXPECT_EQ(count_signal(ev, "no_longer_necessary"), 2u);
  EXPECT_EQ(count_kind(ev, EventKind::BranchJoin), 1u);
  EXPECT_EQ(started(ev).back(), "after");
}

TEST(Engine, UnsatisfiableJoinIsError) {
  const char* src = R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    parallel wait: 3 {
      parallel_branch { call :a, endpoint: svc }
    }
  })";
  auto h = mock(R"({"a": [{}]})");
  Instance inst(parse_shared(src), h, test::quiet_options());
  const RunResult r = inst.run();
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("unsatisfiable join"), std::string::npos);
}

TEST(Engine, ChooseUsesEntrySnapshotAndOtherwise) {
  const char* src = R"(workflow {
    handler "mock"
    context x: 1
    context hits: 0
    choose {
      alternative (x == 1) { manipulate :a { x = 2 hits = hits + 1 } }
      alternative (x == 2) { manipulate :b { hits = hits + 10 } }
      otherwise { manipulate :c { hits = 100 } }
    }
  })";
  auto h = mock("{}");
  Instance inst(parse_shared(src), h, test::quiet_options());
  inst.run();
  EXPECT_EQ(started(inst.log().records()), (std::vector<std::string>{"a"}));
  EXPECT_EQ(inst.store().snapshot().values.at("hits"), Value(1));
}

TEST(Engine, CycleCapRaisesError) {
  const char* src = R"(workflow {
    handler "mock"
    context i: 0
    cycle (true) { manipulate :inc { i = i + 1 } }
  })";
  auto h = mock("{}");
  EngineOptions o = test::quiet_options();
  o.max_iterations = 10;
  Instance inst(parse_shared(src), h, o);
  const RunResult r = inst.run();
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("iteration cap"), std::string::npos);
  EXPECT_EQ(inst.store().snapshot().values.at("i"), Value(10));
}

TEST(Engine, StopDuringBlockedCallRecordsPassthrough) {
  auto h = mock(R"({"a": [{"block": true, "passthrough": "p1", "result": {"x": 9}}], "b": [{}]})");
  Instance inst(parse_shared(kSeq), h, test::quiet_options());
  inst.start();
  while (h.invocations(PositionId("a")) == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  EXPECT_TRUE(inst.stop());
  EXPECT_FALSE(inst.stop());
  const RunResult r = inst.wait();
  EXPECT_EQ(r.lifecycle, Lifecycle::Stopped);
  EXPECT_EQ(r.exit_code(), 2);
  const InstanceState st = inst.save();
  EXPECT_EQ(st.passthroughs.at(PositionId("a")), "p1");
  ASSERT_EQ(st.branches.size(), 1u);

  Instance resumed(parse_shared(kSeq), h, st, {}, test::quiet_options());
  const RunResult r2 = resumed.run();
  EXPECT_EQ(r2.lifecycle, Lifecycle::Finished);
  EXPECT_EQ(h.invocations(PositionId("a")), 1u);
  EXPECT_EQ(started(resumed.log().records()), (std::vector<std::string>{"a", "m", "b"}));
  EXPECT_EQ(resumed.store().snapshot().values.at("x"), Value(10));
  EXPECT_EQ(resumed.log().records().front().seq, st.next_seq);
}

TEST(Engine, ExplicitTerminationStops) {
  auto h = mock(R"({"a": [{"stop": true}]})");
  Instance inst(parse_shared(kSeq), h, test::quiet_options());
  const RunResult r = inst.run();
  EXPECT_EQ(r.lifecycle, Lifecycle::Stopped);
  EXPECT_FALSE(r.error);
  EXPECT_EQ(count_signal(inst.log().records(), "stop"), 1u);
  EXPECT_EQ(started(inst.log().records()), (std::vector<std::string>{"a"}));
  // Resume continues after the stopping activity.
  const InstanceState st = inst.save();
  auto h2 = mock(R"({"b": [{}]})");
  Instance resumed(parse_shared(kSeq), h2, st, {}, test::quiet_options());
  EXPECT_EQ(resumed.run().lifecycle, Lifecycle::Finished);
  EXPECT_EQ(started(resumed.log().records()), (std::vector<std::string>{"m", "b"}));
}

TEST(Engine, JumpRepeatsActivities) {
  auto h = mock(R"({"a": [{}, {}], "b": [{"jump": "a"}, {}]})");
  const char* src = R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    call :a, endpoint: svc
    call :b, endpoint: svc
    manipulate :c { }
  })";
  Instance inst(parse_shared(src), h, test::quiet_options());
  EXPECT_EQ(inst.run().lifecycle, Lifecycle::Finished);
  EXPECT_EQ(started(inst.log().records()), (std::vector<std::string>{"a", "b", "a", "b", "c"}));
}

TEST(Engine, JumpIntoSiblingBranchIsIllegal) {
  const char* src = R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    parallel wait: all {
      parallel_branch { call :a, endpoint: svc }
      parallel_branch { call :b, endpoint: svc }
    }
  })";
  auto h = mock(R"({"a": [{"jump": "b"}], "b": [{"delay_ms": 50}]})");
  Instance inst(parse_shared(src), h, test::quiet_options());
  const RunResult r = inst.run();
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("illegal jump"), std::string::npos);
}

TEST(Engine, CriticalSectionsDoNotOverlap) {
  const char* src = R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    parallel wait: all {
      parallel_branch { critical :s { call :a1, endpoint: svc call :a2, endpoint: svc } }
      parallel_branch { critical :s { call :b1, endpoint: svc call :b2, endpoint: svc } }
    }
  })";
  for (int seed = 0; seed < 20; ++seed) {
    auto h = mock(R"({"a1": [{"delay_ms": [0, 3]}], "a2": [{"delay_ms": [0, 3]}],
                      "b1": [{"delay_ms": [0, 3]}], "b2": [{"delay_ms": [0, 3]}]})",
                  seed);
    Instance inst(parse_shared(src), h, test::quiet_options());
    ASSERT_EQ(inst.run().lifecycle, Lifecycle::Finished);
    int depth = 0;
    for (const auto& e : inst.log().records()) {
      if (e.kind == EventKind::CriticalEnter) EXPECT_EQ(++depth, 1);
      if (e.kind == EventKind::CriticalExit) --depth;
    }
  }
}

TEST(Engine, NestedCriticalIsNotReentrant) {
  const char* src = R"(workflow {
    handler "mock"
    critical :s { critical :s { manipulate :m { } } }
  })";
  auto h = mock("{}");
  Instance inst(parse_shared(src), h, test::quiet_options());
  const RunResult r = inst.run();
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("reentrant"), std::string::npos);
}

TEST(Engine, ResumeWithOverrideSkipsActivity) {
  const char* src = R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    call :a, endpoint: svc
    call :b, endpoint: svc
    call :c, endpoint: svc
  })";
  auto h = mock(R"({"a": [{"stop": true}], "c": [{}]})");
  Instance inst(parse_shared(src), h, test::quiet_options());
  inst.run();
  const InstanceState st = inst.save();
  ResumeOptions ro;
  ro.overrides["0"] = PositionId("c");
  Instance resumed(parse_shared(src), h, st, ro, test::quiet_options());
  EXPECT_EQ(resumed.run().lifecycle, Lifecycle::Finished);
  EXPECT_EQ(started(resumed.log().records()), (std::vector<std::string>{"c"}));
}

TEST(Engine, StopInsideParallelResumesBranches) {
  const char* src = R"(workflow {
    handler "mock"
    endpoint svc: "http://svc"
    context n: 0
    parallel wait: all {
      parallel_branch { call :a, endpoint: svc  manipulate :a2 { n = n + 1 } }
      parallel_branch { call :b, endpoint: svc  manipulate :b2 { n = n + 1 } }
    }
    manipulate :done { n = n * 10 }
  })";
  auto h = mock(R"({"a": [{}], "b": [{"block": true, "passthrough": "pb"}]})");
  Instance inst(parse_shared(src), h, test::quiet_options());
  inst.start();
  while (h.invocations(PositionId("b")) == 0 || inst.store().snapshot().values.at("n") != Value(1)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  inst.stop();
  EXPECT_EQ(inst.wait().lifecycle, Lifecycle::Stopped);
  const InstanceState st = inst.save();
  EXPECT_EQ(st.branches.size(), 2u);  // root waiting at the join, branch b

  MockHandler h2(mock_script_from_json(nlohmann::json::parse(R"({"stored": {"pb": {}}})")));
  Instance resumed(parse_shared(src), h2, st, {}, test::quiet_options());
  EXPECT_EQ(resumed.run().lifecycle, Lifecycle::Finished);
  EXPECT_EQ(started(resumed.log().records()), (std::vector<std::string>{"b", "b2", "done"}));
  EXPECT_EQ(resumed.store().snapshot().values.at("n"), Value(20));
}

}  // namespace
}  // namespace wee
