#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>

#include "wee/context_store.hpp"
#include "wee/errors.hpp"
#include "wee/parser.hpp"

namespace wee {
namespace {

std::vector<ContextDecl> decls(std::initializer_list<std::pair<const char*, const char*>> list) {
  std::vector<ContextDecl> out;
  for (const auto& [name, src] : list) out.push_back({name, parse_expression(src), {}});
  return out;
}

const PositionId kPos("m");

TEST(ContextStore, Init) {
  ContextStore booking(decls({{"price", "0"}, {"people", "3"}}));
  EXPECT_EQ(booking.snapshot().values, (Values{{"price", 0}, {"people", 3}}));
  EXPECT_EQ(booking.version(), 0u);
  EXPECT_TRUE(booking.change_log().empty());

  ContextStore empty(decls({}));
  EXPECT_TRUE(empty.snapshot().values.empty());

  ContextStore chained(decls({{"a", "1"}, {"b", "a + 1"}}));
  EXPECT_EQ(chained.snapshot().values, (Values{{"a", 1}, {"b", 2}}));

  ContextStore overridden(decls({{"a", "1"}, {"b", "a + 1"}}), {{"a", 10}});
  EXPECT_EQ(overridden.snapshot().values, (Values{{"a", 10}, {"b", 11}}));
}

TEST(ContextStore, InitErrors) {
  EXPECT_THROW(ContextStore(decls({{"a", "1"}, {"a", "2"}})), Error);
  EXPECT_THROW(ContextStore(decls({{"a", "b"}, {"b", "1"}})), EvalError);
}

TEST(ContextStore, Commit) {
  ContextStore s(decls({{"x", "1"}, {"y", "0"}, {"z", "0"}}));
  for (int i = 0; i < 5; ++i) s.commit({{"z", Value(i), Value(i + 1)}}, kPos);
  EXPECT_EQ(s.version(), 5u);
  EXPECT_EQ(s.commit({{"x", Value(1), Value(2)}}, PositionId("a")), 6u);
  EXPECT_EQ(s.change_log().back(), (ChangeRecord{6, PositionId("a"), "x", Value(1), Value(2)}));
  EXPECT_EQ(s.commit({}, kPos), 6u);
  EXPECT_EQ(s.commit({{"x", Value(2), Value(3)}, {"y", Value(0), Value(1)}, {"z", Value(5), Value(6)}}, kPos), 9u);
  const auto log = s.change_log();
  for (std::size_t i = 0; i < log.size(); ++i) EXPECT_EQ(log[i].seq, i + 1);
  EXPECT_EQ(ContextStore::replay(s.baseline(), log), s.snapshot().values);
}

TEST(ContextStore, Snapshots) {
  ContextStore s(decls({{"x", "1"}}));
  s.commit({{"x", Value(1), Value(2)}}, kPos);
  EXPECT_EQ(s.snapshot().values.at("x"), Value(2));
  EXPECT_EQ(s.snapshot(), s.snapshot());
}

TEST(ContextStore, UpdateIsAtomicAndFailureCommitsNothing) {
  ContextStore s(decls({{"x", "1"}, {"y", "0"}}));
  const auto stmts = std::vector<Assignment>{{"x", parse_expression("x + 1")}, {"y", parse_expression("x / 0")}};
  const auto before = s.snapshot();
  EXPECT_THROW(s.update(kPos, [&](const Values& v) { return apply_assignments(stmts, v); }), EvalError);
  EXPECT_EQ(s.snapshot(), before);
  EXPECT_TRUE(s.change_log().empty());

  std::vector<ChangeRecord> seen;
  const auto rec = s.update(
      kPos, [](const Values& v) { return apply_assignments({{"x", parse_expression("x * 5")}}, v); },
      [&](const std::vector<ChangeRecord>& r) { seen = r; });
  EXPECT_EQ(rec, seen);
  EXPECT_EQ(s.snapshot().values.at("x"), Value(5));
}

TEST(ContextStore, RestoredBaseline) {
  ContextStore s(Values{{"x", 7}}, 12);
  EXPECT_EQ(s.version(), 12u);
  s.commit({{"x", Value(7), Value(8)}}, kPos);
  EXPECT_EQ(s.change_log().front().seq, 13u);
  EXPECT_EQ(ContextStore::replay(s.baseline(), s.change_log()), s.snapshot().values);
}

// Writers commit three-variable deltas that keep a == b == c; a racing reader
// must never see a partial delta, and the log stays gap-free.
TEST(ContextStoreProperty, SnapshotIsolationAndLinearizability) {
  ContextStore s(decls({{"a", "0"}, {"b", "0"}, {"c", "0"}}));
  std::atomic<bool> done{false};
  std::atomic<int> torn{0};
  std::thread reader([&] {
    while (!done) {
      const auto v = s.snapshot().values;
      if (!(v.at("a") == v.at("b") && v.at("b") == v.at("c"))) ++torn;
    }
  });
  const auto bump = std::vector<Assignment>{
      {"a", parse_expression("a + 1")}, {"b", parse_expression("b + 1")}, {"c", parse_expression("c + 1")}};
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w) {
    writers.emplace_back([&, w] {
      for (int i = 0; i < 2500; ++i) {
        s.update(PositionId("w" + std::to_string(w)), [&](const Values& v) { return apply_assignments(bump, v); });
      }
    });
  }
  for (auto& t : writers) t.join();
  done = true;
  reader.join();
  EXPECT_EQ(torn, 0);
  EXPECT_EQ(s.version(), 30000u);
  EXPECT_EQ(s.snapshot().values.at("a"), Value(10000));
  const auto log = s.change_log();
  for (std::size_t i = 0; i < log.size(); ++i) ASSERT_EQ(log[i].seq, i + 1);
  EXPECT_EQ(ContextStore::replay(s.baseline(), log), s.snapshot().values);
}

TEST(ContextStoreProperty, ReplayOverRandomDeltas) {
  std::mt19937 rng(5);
  ContextStore s(decls({{"x", "0"}, {"y", "0"}}));
  for (int i = 0; i < 1000; ++i) {
    const auto name = std::uniform_int_distribution<int>(0, 1)(rng) ? "x" : "y";
    const int delta = std::uniform_int_distribution<int>(-3, 3)(rng);
    s.update(kPos, [&](const Values& v) {
      return apply_assignments({{name, parse_expression(std::string(name) + " + " + std::to_string(delta))}}, v);
    });
  }
  EXPECT_EQ(ContextStore::replay(s.baseline(), s.change_log()), s.snapshot().values);
  EXPECT_EQ(s.version(), s.change_log().size());
}

}  // namespace
}  // namespace wee
