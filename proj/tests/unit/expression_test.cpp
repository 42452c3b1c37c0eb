#include <gtest/gtest.h>

#include <random>

#include "wee/errors.hpp"
#include "wee/expression.hpp"

namespace wee {
namespace {

Value eval(const std::string& src, const Values& env = {}) { return parse_expression(src).eval(env); }

TEST(Expression, Examples) {
  EXPECT_EQ(eval("3 > 2"), Value(true));
  EXPECT_EQ(eval("price > 10000", {{"price", 12000}}), Value(true));
  EXPECT_EQ(eval("price > 10000", {{"price", 10000}}), Value(false));
}

TEST(Expression, ModuloAndNegationTable) {
  // x % 2 == 0 && !done, enumerated by hand.
  struct Row {
    int x;
    bool done;
    bool expected;
  };
  const Row rows[] = {{4, false, true}, {4, true, false}, {3, false, false}, {3, true, false},
                      {0, false, true}, {-2, false, true}, {-3, false, false}};
  for (const auto& r : rows) {
    EXPECT_EQ(eval("x % 2 == 0 && !done", {{"x", r.x}, {"done", r.done}}), Value(r.expected)) << r.x << " " << r.done;
  }
}

TEST(Expression, TruncatingDivision) {
  EXPECT_EQ(eval("7 / 2"), Value(3));
  EXPECT_EQ(eval("-7 / 2"), Value(-3));
  EXPECT_EQ(eval("7 / -2"), Value(-3));
  EXPECT_EQ(eval("-7 % 2"), Value(-1));
  EXPECT_EQ(eval("7 % -2"), Value(1));
}

TEST(Expression, Precedence) {
  EXPECT_EQ(eval("1 + 2 * 3"), Value(7));
  EXPECT_EQ(eval("(1 + 2) * 3"), Value(9));
  EXPECT_EQ(eval("10 - 4 - 3"), Value(3));
  EXPECT_EQ(eval("true || false && false"), Value(true));
  EXPECT_EQ(eval("-2 * -3"), Value(6));
  EXPECT_EQ(parse_expression("-5"), Expr::literal(Value(-5)));
  EXPECT_EQ(parse_expression("-(5)"), Expr::unary(UnaryOp::Negate, Expr::literal(Value(5))));
}

TEST(Expression, StringsCompareForEquality) {
  EXPECT_EQ(eval("s == \"ok\"", {{"s", "ok"}}), Value(true));
  EXPECT_EQ(eval("s != \"ok\"", {{"s", "no"}}), Value(true));
  EXPECT_THROW(eval("s + \"x\"", {{"s", "a"}}), EvalError);
}

TEST(Expression, ShortCircuit) {
  EXPECT_EQ(eval("false && missing"), Value(false));
  EXPECT_EQ(eval("true || 1 / 0 == 1"), Value(true));
  EXPECT_THROW(eval("true && missing"), EvalError);
}

TEST(Expression, Errors) {
  EXPECT_THROW(eval("y + 1"), EvalError);
  EXPECT_THROW(eval("1 / 0"), EvalError);
  EXPECT_THROW(eval("1 % 0"), EvalError);
  EXPECT_THROW(eval("1 + true"), EvalError);
  EXPECT_THROW(eval("!1"), EvalError);
  EXPECT_THROW(eval("1 < \"a\""), EvalError);
  EXPECT_THROW(eval("9223372036854775807 + 1"), EvalError);
  EXPECT_THROW(parse_expression("1 +"), ParseError);
  EXPECT_THROW(parse_expression("1 2"), ParseError);
}

TEST(Expression, Variables) {
  EXPECT_EQ(parse_expression("a + b * a > c && !d").variables(), (std::set<std::string>{"a", "b", "c", "d"}));
}

// Random well-typed integer expressions: printing reparses to the same tree,
// and evaluation is pure and repeatable.
Expr random_int_expr(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth > 0 ? 6 : 1);
  switch (pick(rng)) {
    case 0:
      return Expr::literal(Value(std::uniform_int_distribution<int>(-20, 20)(rng)));
    case 1:
      return Expr::variable(std::uniform_int_distribution<int>(0, 1)(rng) ? "x" : "y");
    case 2:
      return Expr::unary(UnaryOp::Negate, random_int_expr(rng, depth - 1));
    case 3:
      return Expr::binary(BinaryOp::Add, random_int_expr(rng, depth - 1), random_int_expr(rng, depth - 1));
    case 4:
      return Expr::binary(BinaryOp::Sub, random_int_expr(rng, depth - 1), random_int_expr(rng, depth - 1));
    case 5:
      return Expr::binary(BinaryOp::Mul, random_int_expr(rng, depth - 1), random_int_expr(rng, depth - 1));
    default:
      return Expr::binary(BinaryOp::Mod, random_int_expr(rng, depth - 1), Expr::literal(Value(7)));
  }
}

TEST(ExpressionProperty, PrintReparsesAndEvalIsPure) {
  std::mt19937 rng(7);
  for (int i = 0; i < 500; ++i) {
    const Expr e = random_int_expr(rng, 3);
    const Expr back = parse_expression(e.to_string());
    EXPECT_EQ(back, e) << e.to_string() << " => " << back.to_string();
    const Values env{{"x", 3}, {"y", -5}};
    const Values before = env;
    const Value first = e.eval(env);
    EXPECT_EQ(e.eval(env), first);
    EXPECT_EQ(back.eval(env), first);
    EXPECT_EQ(env, before);
  }
}

TEST(Assignments, SequentialEffects) {
  const std::vector<Assignment> s{{"x", parse_expression("x + 1")}, {"y", parse_expression("x * 2")}};
  const Delta d = apply_assignments(s, {{"x", 1}, {"y", 0}});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0], (Change{"x", Value(1), Value(2)}));
  EXPECT_EQ(d[1], (Change{"y", Value(0), Value(4)}));
  EXPECT_TRUE(apply_assignments({}, {{"x", 1}}).empty());
}

TEST(Assignments, ErrorsLeaveNothing) {
  EXPECT_THROW(apply_assignments({{"x", parse_expression("1 / 0")}}, {{"x", 1}}), EvalError);
  EXPECT_THROW(apply_assignments({{"z", parse_expression("1")}}, {{"x", 1}}), Error);
}

Values reference_fold(const std::vector<Assignment>& s, Values env) {
  for (const auto& a : s) env[a.name] = a.value.eval(env);
  return env;
}

TEST(AssignmentsProperty, MatchesSequentialFold) {
  const std::vector<Assignment> order{{"x", parse_expression("1")}, {"x", parse_expression("x + 1")}};
  const auto d = apply_assignments(order, {{"x", 0}});
  EXPECT_EQ(d.back().new_value, Value(2));

  std::mt19937 rng(11);
  for (int i = 0; i < 300; ++i) {
    std::vector<Assignment> s;
    const int n = std::uniform_int_distribution<int>(0, 5)(rng);
    for (int k = 0; k < n; ++k) {
      s.push_back({std::uniform_int_distribution<int>(0, 1)(rng) ? "x" : "y", random_int_expr(rng, 3)});
    }
    const Values initial{{"x", 2}, {"y", 9}};
    Delta delta;
    try {
      delta = apply_assignments(s, initial);
    } catch (const EvalError&) {
      EXPECT_THROW(reference_fold(s, initial), EvalError);  // overflow in both
      continue;
    }
    Values applied = initial;
    for (const auto& c : delta) {
      EXPECT_EQ(applied.at(c.name), c.old_value);
      applied[c.name] = c.new_value;
    }
    EXPECT_EQ(applied, reference_fold(s, initial));
  }
}

}  // namespace
}  // namespace wee
