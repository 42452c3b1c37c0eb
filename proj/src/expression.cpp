#include "wee/expression.hpp"

#include <limits>
#include <optional>

#include "wee/errors.hpp"

namespace wee {

namespace {

int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::Or: return 1;
    case BinaryOp::And: return 2;
    case BinaryOp::Eq:
    case BinaryOp::Ne: return 3;
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge: return 4;
    case BinaryOp::Add:
    case BinaryOp::Sub: return 5;
    case BinaryOp::Mul:
    case BinaryOp::Div:
    case BinaryOp::Mod: return 6;
  }
  return 0;
}

constexpr int kUnaryPrecedence = 7;

std::optional<BinaryOp> binary_from(const Token& t) {
  if (t.kind != TokenKind::Symbol) return std::nullopt;
  static const std::pair<const char*, BinaryOp> table[] = {
      {"||", BinaryOp::Or}, {"&&", BinaryOp::And}, {"==", BinaryOp::Eq}, {"!=", BinaryOp::Ne},
      {"<", BinaryOp::Lt},  {"<=", BinaryOp::Le},  {">", BinaryOp::Gt},  {">=", BinaryOp::Ge},
      {"+", BinaryOp::Add}, {"-", BinaryOp::Sub},  {"*", BinaryOp::Mul}, {"/", BinaryOp::Div},
      {"%", BinaryOp::Mod}};
  for (const auto& [text, op] : table) {
    if (t.text == text) return op;
  }
  return std::nullopt;
}

[[noreturn]] void type_error(BinaryOp op, const Value& a, const Value& b) {
  throw EvalError(std::string("type mismatch: ") + kind_name(a.kind()) + " " + spelling(op) + " " +
                  kind_name(b.kind()));
}

std::int64_t arithmetic(BinaryOp op, std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  switch (op) {
    case BinaryOp::Add:
      if (__builtin_add_overflow(a, b, &out)) throw EvalError("integer overflow in +");
      return out;
    case BinaryOp::Sub:
      if (__builtin_sub_overflow(a, b, &out)) throw EvalError("integer overflow in -");
      return out;
    case BinaryOp::Mul:
      if (__builtin_mul_overflow(a, b, &out)) throw EvalError("integer overflow in *");
      return out;
    case BinaryOp::Div:
    case BinaryOp::Mod:
      if (b == 0) throw EvalError("division by zero");
      if (a == std::numeric_limits<std::int64_t>::min() && b == -1) {
        if (op == BinaryOp::Mod) return 0;
        throw EvalError("integer overflow in /");
      }
      // C++ integer division truncates toward zero; % takes the dividend's sign.
      return op == BinaryOp::Div ? a / b : a % b;
    default:
      break;
  }
  throw EvalError("not an arithmetic operator");
}

bool compare(BinaryOp op, const Value& a, const Value& b) {
  if (a.kind() != b.kind()) type_error(op, a, b);
  if (op == BinaryOp::Eq) return a == b;
  if (op == BinaryOp::Ne) return !(a == b);

  int order = 0;
  if (a.is_integer()) {
    order = a.as_integer() < b.as_integer() ? -1 : (a.as_integer() > b.as_integer() ? 1 : 0);
  } else if (a.is_string()) {
    order = a.as_string().compare(b.as_string());
  } else {
    type_error(op, a, b);
  }
  switch (op) {
    case BinaryOp::Lt: return order < 0;
    case BinaryOp::Le: return order <= 0;
    case BinaryOp::Gt: return order > 0;
    case BinaryOp::Ge: return order >= 0;
    default: break;
  }
  return false;
}

bool require_boolean(const Value& v, const char* where) {
  if (!v.is_boolean()) {
    throw EvalError(std::string("type mismatch: ") + where + " expects boolean, got " + kind_name(v.kind()));
  }
  return v.as_boolean();
}

void collect_variables(const Expr& e, std::set<std::string>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Expr::Variable>) {
          out.insert(n.name);
        } else if constexpr (std::is_same_v<T, Expr::Unary>) {
          collect_variables(n.operand, out);
        } else if constexpr (std::is_same_v<T, Expr::Binary>) {
          collect_variables(n.lhs, out);
          collect_variables(n.rhs, out);
        }
      },
      e.node());
}

bool negative_literal(const Expr& e) {
  const auto* l = std::get_if<Expr::Literal>(&e.node());
  return l && l->value.is_integer() && l->value.as_integer() < 0;
}

int node_precedence(const Expr& e) {
  if (const auto* b = std::get_if<Expr::Binary>(&e.node())) return precedence(b->op);
  if (std::holds_alternative<Expr::Unary>(e.node()) || negative_literal(e)) return kUnaryPrecedence;
  return kUnaryPrecedence + 1;
}

std::string wrap(const Expr& e, bool parens) {
  return parens ? "(" + e.to_string() + ")" : e.to_string();
}

Expr parse_binary(TokenStream& ts, int min_precedence);

Expr parse_primary(TokenStream& ts) {
  const Token& t = ts.peek();
  if (t.kind == TokenKind::Integer) {
    return Expr::literal(Value(ts.next().integer));
  }
  if (t.kind == TokenKind::String) {
    return Expr::literal(Value(ts.next().text));
  }
  if (t.kind == TokenKind::Identifier) {
    Token id = ts.next();
    if (id.text == "true") return Expr::literal(Value(true));
    if (id.text == "false") return Expr::literal(Value(false));
    if (id.text == "null") return Expr::literal(Value());
    return Expr::variable(id.text);
  }
  if (ts.accept_symbol("(")) {
    Expr inner = parse_binary(ts, 1);
    ts.expect_symbol(")");
    return inner;
  }
  if (ts.accept_symbol("!")) {
    return Expr::unary(UnaryOp::Not, parse_primary(ts));
  }
  if (ts.accept_symbol("-")) {
    // "-5" is a literal; "-(5)" and "-x" are negations.
    if (ts.peek().kind == TokenKind::Integer) return Expr::literal(Value(-ts.next().integer));
    return Expr::unary(UnaryOp::Negate, parse_primary(ts));
  }
  ts.fail("expected an expression, found " + describe(t));
}

// Precedence climbing; every binary operator is left-associative.
Expr parse_binary(TokenStream& ts, int min_precedence) {
  Expr lhs = parse_primary(ts);
  while (true) {
    const auto op = binary_from(ts.peek());
    if (!op || precedence(*op) < min_precedence) break;
    ts.next();
    Expr rhs = parse_binary(ts, precedence(*op) + 1);
    lhs = Expr::binary(*op, std::move(lhs), std::move(rhs));
  }
  return lhs;
}

}  // namespace

const char* spelling(UnaryOp op) noexcept { return op == UnaryOp::Not ? "!" : "-"; }

const char* spelling(BinaryOp op) noexcept {
  switch (op) {
    case BinaryOp::Or: return "||";
    case BinaryOp::And: return "&&";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
  }
  return "?";
}

Expr::Expr() : Expr(literal(Value())) {}

Expr Expr::literal(Value v) { return Expr(std::make_shared<const Node>(Literal{std::move(v)})); }

Expr Expr::variable(std::string name) {
  return Expr(std::make_shared<const Node>(Variable{std::move(name)}));
}

Expr Expr::unary(UnaryOp op, Expr operand) {
  return Expr(std::make_shared<const Node>(Unary{op, std::move(operand)}));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  return Expr(std::make_shared<const Node>(Binary{op, std::move(lhs), std::move(rhs)}));
}

Value Expr::eval(const Values& env) const {
  return std::visit(
      [&](const auto& n) -> Value {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Literal>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, Variable>) {
          const auto it = env.find(n.name);
          if (it == env.end()) throw EvalError("unbound variable '" + n.name + "'");
          return it->second;
        } else if constexpr (std::is_same_v<T, Unary>) {
          const Value v = n.operand.eval(env);
          if (n.op == UnaryOp::Not) return Value(!require_boolean(v, "!"));
          if (!v.is_integer()) {
            throw EvalError(std::string("type mismatch: unary - expects integer, got ") + kind_name(v.kind()));
          }
          if (v.as_integer() == std::numeric_limits<std::int64_t>::min()) {
            throw EvalError("integer overflow in unary -");
          }
          return Value(-v.as_integer());
        } else {
          if (n.op == BinaryOp::And) {
            if (!require_boolean(n.lhs.eval(env), "&&")) return Value(false);
            return Value(require_boolean(n.rhs.eval(env), "&&"));
          }
          if (n.op == BinaryOp::Or) {
            if (require_boolean(n.lhs.eval(env), "||")) return Value(true);
            return Value(require_boolean(n.rhs.eval(env), "||"));
          }
          const Value a = n.lhs.eval(env);
          const Value b = n.rhs.eval(env);
          switch (n.op) {
            case BinaryOp::Add:
            case BinaryOp::Sub:
            case BinaryOp::Mul:
            case BinaryOp::Div:
            case BinaryOp::Mod:
              if (!a.is_integer() || !b.is_integer()) type_error(n.op, a, b);
              return Value(arithmetic(n.op, a.as_integer(), b.as_integer()));
            default:
              return Value(compare(n.op, a, b));
          }
        }
      },
      node());
}

std::set<std::string> Expr::variables() const {
  std::set<std::string> out;
  collect_variables(*this, out);
  return out;
}

std::string Expr::to_string() const {
  return std::visit(
      [&](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Literal>) {
          return n.value.to_literal();
        } else if constexpr (std::is_same_v<T, Variable>) {
          return n.name;
        } else if constexpr (std::is_same_v<T, Unary>) {
          const auto* lit = std::get_if<Literal>(&n.operand.node());
          const bool integer_literal = lit && lit->value.is_integer();
          return std::string(spelling(n.op)) +
                 wrap(n.operand, integer_literal || (node_precedence(n.operand) <= kUnaryPrecedence &&
                                                     !std::holds_alternative<Unary>(n.operand.node())));
        } else {
          const int p = precedence(n.op);
          return wrap(n.lhs, node_precedence(n.lhs) < p) + " " + spelling(n.op) + " " +
                 wrap(n.rhs, node_precedence(n.rhs) <= p);
        }
      },
      node());
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  const auto& x = a.node();
  const auto& y = b.node();
  if (x.index() != y.index()) return false;
  if (const auto* l = std::get_if<Expr::Literal>(&x)) return l->value == std::get<Expr::Literal>(y).value;
  if (const auto* v = std::get_if<Expr::Variable>(&x)) return v->name == std::get<Expr::Variable>(y).name;
  if (const auto* u = std::get_if<Expr::Unary>(&x)) {
    const auto& w = std::get<Expr::Unary>(y);
    return u->op == w.op && u->operand == w.operand;
  }
  const auto& p = std::get<Expr::Binary>(x);
  const auto& q = std::get<Expr::Binary>(y);
  return p.op == q.op && p.lhs == q.lhs && p.rhs == q.rhs;
}

Expr parse_expression(TokenStream& tokens) { return parse_binary(tokens, 1); }

Expr parse_expression(std::string_view source) {
  TokenStream ts(tokenize(source));
  Expr e = parse_expression(ts);
  if (!ts.at_end()) ts.fail("unexpected " + describe(ts.peek()) + " after expression");
  return e;
}

Delta apply_assignments(const std::vector<Assignment>& statements, const Values& current) {
  Values working = current;
  Delta delta;
  delta.reserve(statements.size());
  for (const auto& stmt : statements) {
    auto it = working.find(stmt.name);
    if (it == working.end()) throw EvalError("assignment to undeclared variable '" + stmt.name + "'");
    Value next = stmt.value.eval(working);
    delta.push_back(Change{stmt.name, it->second, next});
    it->second = std::move(next);
  }
  return delta;
}

}  // namespace wee
