#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "wee/lexer.hpp"
#include "wee/value.hpp"

namespace wee {

enum class UnaryOp { Not, Negate };
enum class BinaryOp { Or, And, Eq, Ne, Lt, Le, Gt, Ge, Add, Sub, Mul, Div, Mod };

const char* spelling(UnaryOp op) noexcept;
const char* spelling(BinaryOp op) noexcept;

/// Immutable expression tree. Copies share structure, so an Expr can be
/// handed to any number of branch threads.
class Expr {
 public:
  struct Literal;
  struct Variable;
  struct Unary;
  struct Binary;
  using Node = std::variant<Literal, Variable, Unary, Binary>;

  Expr();  // literal null

  static Expr literal(Value v);
  static Expr variable(std::string name);
  static Expr unary(UnaryOp op, Expr operand);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);

  const Node& node() const;

  /// Evaluates against `env`. Pure: never modifies the environment.
  /// Throws EvalError on unbound variables, type mismatches, division by
  /// zero and integer overflow.
  Value eval(const Values& env) const;

  /// Names of every variable referenced, in any branch of the tree.
  std::set<std::string> variables() const;

  /// Source form with the minimum parentheses needed to reparse the same tree.
  std::string to_string() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expr::Literal {
  Value value;
};
struct Expr::Variable {
  std::string name;
};
struct Expr::Unary {
  UnaryOp op;
  Expr operand;
};
struct Expr::Binary {
  BinaryOp op;
  Expr lhs;
  Expr rhs;
};

inline const Expr::Node& Expr::node() const { return *node_; }

/// Parses one expression from the stream, stopping at the first token that
/// cannot extend it.
Expr parse_expression(TokenStream& tokens);

/// Parses a complete expression; trailing input is an error.
Expr parse_expression(std::string_view source);

struct Assignment {
  std::string name;
  Expr value;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct Change {
  std::string name;
  Value old_value;
  Value new_value;

  friend bool operator==(const Change&, const Change&) = default;
};

using Delta = std::vector<Change>;

/// Applies assignments left to right over a copy of `current`; each statement
/// sees the effects of the ones before it. Every target must already exist in
/// `current`. Returns one Change per statement. On error nothing is returned,
/// so the caller has nothing to commit.
Delta apply_assignments(const std::vector<Assignment>& statements, const Values& current);

}  // namespace wee
