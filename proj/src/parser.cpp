#include "wee/parser.hpp"

#include <set>
#include <sstream>

#include "wee/errors.hpp"

namespace wee {

namespace {

class WorkflowParser {
 public:
  explicit WorkflowParser(std::string_view source) : ts_(tokenize(source)) {}

  WorkflowAst parse() {
    WorkflowAst ast;
    ts_.expect_keyword("workflow");
    ts_.expect_symbol("{");
    parse_headers(ast);
    ast.body = parse_block(false);
    ts_.expect_symbol("}");
    if (!ts_.at_end()) ts_.fail("unexpected " + describe(ts_.peek()) + " after workflow");
    index_positions(ast);
    return ast;
  }

 private:
  void parse_headers(WorkflowAst& ast) {
    bool have_handler = false;
    std::set<std::string> endpoint_names;
    std::set<std::string> context_names;
    while (true) {
      const Token head = ts_.peek();
      if (ts_.at_keyword("handler")) {
        ts_.next();
        if (have_handler) TokenStream::fail_at(head, "duplicate handler declaration");
        if (ts_.peek().kind != TokenKind::String) ts_.fail("expected handler name string");
        ast.handler = ts_.next().text;
        have_handler = true;
      } else if (ts_.at_keyword("endpoint")) {
        ts_.next();
        const Token name = ts_.expect_identifier("endpoint name");
        ts_.expect_symbol(":");
        if (ts_.peek().kind != TokenKind::String) ts_.fail("expected endpoint URI string");
        if (!endpoint_names.insert(name.text).second) {
          TokenStream::fail_at(name, "duplicate endpoint '" + name.text + "'");
        }
        ast.endpoints.emplace_back(name.text, ts_.next().text);
      } else if (ts_.at_keyword("context")) {
        ts_.next();
        const Token name = ts_.expect_identifier("context variable name");
        ts_.expect_symbol(":");
        if (!context_names.insert(name.text).second) {
          TokenStream::fail_at(name, "duplicate context variable '" + name.text + "'");
        }
        ast.context.push_back(ContextDecl{name.text, parse_expression(ts_), name.location});
      } else {
        break;
      }
    }
    if (!have_handler) ts_.fail("missing handler declaration");
  }

  // `in_parallel` is true while directly inside a parallel body (possibly
  // nested in choose/cycle/critical), where parallel_branch is permitted.
  Block parse_block(bool in_parallel) {
    Block block;
    while (!ts_.at_symbol("}") && !ts_.at_end()) block.push_back(parse_statement(in_parallel));
    return block;
  }

  Block parse_braced_block(bool in_parallel) {
    ts_.expect_symbol("{");
    Block b = parse_block(in_parallel);
    ts_.expect_symbol("}");
    return b;
  }

  Node parse_statement(bool in_parallel) {
    const Token head = ts_.peek();
    Node node;
    node.location = head.location;
    if (head.kind != TokenKind::Identifier) ts_.fail("expected a statement, found " + describe(head));

    if (head.text == "call") {
      ts_.next();
      CallActivity call;
      ts_.expect_symbol(":");
      call.position = PositionId(ts_.expect_identifier("activity label").text);
      ts_.expect_symbol(",");
      ts_.expect_keyword("endpoint");
      ts_.expect_symbol(":");
      call.endpoint = ts_.expect_identifier("endpoint name").text;
      if (ts_.at_symbol(",") && ts_.peek(1).kind == TokenKind::Identifier && ts_.peek(1).text == "parameters") {
        ts_.next();
        ts_.next();
        ts_.expect_symbol(":");
        ts_.expect_symbol("{");
        std::set<std::string> seen;
        while (!ts_.at_symbol("}")) {
          const Token name = ts_.expect_identifier("parameter name");
          if (!seen.insert(name.text).second) TokenStream::fail_at(name, "duplicate parameter '" + name.text + "'");
          ts_.expect_symbol(":");
          call.parameters.emplace_back(name.text, parse_expression(ts_));
          ts_.accept_symbol(",");
        }
        ts_.expect_symbol("}");
      }
      node.kind = std::move(call);
    } else if (head.text == "manipulate") {
      ts_.next();
      ManipulateActivity m;
      ts_.expect_symbol(":");
      m.position = PositionId(ts_.expect_identifier("activity label").text);
      ts_.expect_symbol("{");
      while (!ts_.at_symbol("}")) {
        const Token name = ts_.expect_identifier("assignment target");
        ts_.expect_symbol("=");
        m.statements.push_back(Assignment{name.text, parse_expression(ts_)});
      }
      ts_.expect_symbol("}");
      node.kind = std::move(m);
    } else if (head.text == "parallel") {
      ts_.next();
      Parallel p;
      ts_.expect_keyword("wait");
      ts_.expect_symbol(":");
      if (ts_.at_keyword("all")) {
        ts_.next();
        p.wait = WaitSpec::wait_all();
      } else if (ts_.peek().kind == TokenKind::Integer) {
        const Token k = ts_.next();
        if (k.integer < 1) TokenStream::fail_at(k, "wait count must be ≥ 1");
        p.wait = WaitSpec::first(k.integer);
      } else if (ts_.at_symbol("-")) {
        ts_.fail("wait count must be ≥ 1");
      } else {
        ts_.fail("expected 'all' or a branch count after wait:");
      }
      p.body = parse_braced_block(true);
      node.kind = std::move(p);
    } else if (head.text == "parallel_branch") {
      if (!in_parallel) TokenStream::fail_at(head, "parallel_branch outside of a parallel block");
      ts_.next();
      node.kind = ParallelBranch{parse_braced_block(false)};
    } else if (head.text == "choose") {
      ts_.next();
      Choose c;
      ts_.expect_symbol("{");
      while (ts_.at_keyword("alternative")) {
        ts_.next();
        ts_.expect_symbol("(");
        Expr cond = parse_expression(ts_);
        ts_.expect_symbol(")");
        c.alternatives.push_back(Alternative{std::move(cond), parse_braced_block(in_parallel)});
      }
      if (ts_.at_keyword("otherwise")) {
        ts_.next();
        c.has_otherwise = true;
        c.otherwise = parse_braced_block(in_parallel);
      }
      ts_.expect_symbol("}");
      node.kind = std::move(c);
    } else if (head.text == "cycle") {
      ts_.next();
      ts_.expect_symbol("(");
      Expr cond = parse_expression(ts_);
      ts_.expect_symbol(")");
      node.kind = Cycle{std::move(cond), parse_braced_block(in_parallel)};
    } else if (head.text == "critical") {
      ts_.next();
      ts_.expect_symbol(":");
      std::string section = ts_.expect_identifier("critical section name").text;
      node.kind = Critical{std::move(section), parse_braced_block(in_parallel)};
    } else if (head.text == "handler" || head.text == "endpoint" || head.text == "context") {
      TokenStream::fail_at(head, "'" + head.text + "' declarations must precede the workflow body");
    } else {
      ts_.fail("unknown statement " + describe(head));
    }
    return node;
  }

  TokenStream ts_;
};

struct Validator {
  const WorkflowAst& ast;
  std::set<std::string> declared;
  std::vector<Diagnostic> out;

  void check_expr(const Expr& e, SourceLocation at, const std::set<std::string>& scope) {
    for (const auto& name : e.variables()) {
      if (scope.count(name) == 0) out.push_back({"undefined variable '" + name + "'", at});
    }
  }

  void check_block(const Block& block) {
    for (const Node& node : block) {
      std::visit(
          [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, CallActivity>) {
              if (!ast.endpoint_uri(n.endpoint)) {
                out.push_back({"undefined endpoint '" + n.endpoint + "'", node.location});
              }
              for (const auto& [name, e] : n.parameters) check_expr(e, node.location, declared);
            } else if constexpr (std::is_same_v<T, ManipulateActivity>) {
              for (const auto& st : n.statements) {
                if (declared.count(st.name) == 0) {
                  out.push_back({"undefined variable '" + st.name + "'", node.location});
                }
                check_expr(st.value, node.location, declared);
              }
            } else if constexpr (std::is_same_v<T, Choose>) {
              for (const auto& alt : n.alternatives) check_expr(alt.condition, node.location, declared);
            } else if constexpr (std::is_same_v<T, Cycle>) {
              check_expr(n.condition, node.location, declared);
            }
          },
          node.kind);
      for (std::size_t s = 0; s < child_block_count(node); ++s) check_block(child_block(node, s));
    }
  }
};

void print_block(std::ostringstream& os, const Block& block, int depth);

void indent(std::ostringstream& os, int depth) {
  for (int i = 0; i < depth; ++i) os << "  ";
}

void print_braced(std::ostringstream& os, const Block& block, int depth) {
  os << "{\n";
  print_block(os, block, depth + 1);
  indent(os, depth);
  os << "}\n";
}

void print_block(std::ostringstream& os, const Block& block, int depth) {
  for (const Node& node : block) {
    indent(os, depth);
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, CallActivity>) {
            os << "call :" << n.position.value << ", endpoint: " << n.endpoint;
            if (!n.parameters.empty()) {
              os << ", parameters: {";
              for (std::size_t i = 0; i < n.parameters.size(); ++i) {
                os << " " << n.parameters[i].first << ": " << n.parameters[i].second.to_string();
              }
              os << " }";
            }
            os << "\n";
          } else if constexpr (std::is_same_v<T, ManipulateActivity>) {
            os << "manipulate :" << n.position.value << " {";
            if (n.statements.empty()) {
              os << " }\n";
            } else {
              os << "\n";
              for (const auto& st : n.statements) {
                indent(os, depth + 1);
                os << st.name << " = " << st.value.to_string() << "\n";
              }
              indent(os, depth);
              os << "}\n";
            }
          } else if constexpr (std::is_same_v<T, Parallel>) {
            os << "parallel wait: " << (n.wait.all ? std::string("all") : std::to_string(n.wait.count)) << " ";
            print_braced(os, n.body, depth);
          } else if constexpr (std::is_same_v<T, ParallelBranch>) {
            os << "parallel_branch ";
            print_braced(os, n.body, depth);
          } else if constexpr (std::is_same_v<T, Choose>) {
            os << "choose {\n";
            for (const auto& alt : n.alternatives) {
              indent(os, depth + 1);
              os << "alternative (" << alt.condition.to_string() << ") ";
              print_braced(os, alt.body, depth + 1);
            }
            if (n.has_otherwise) {
              indent(os, depth + 1);
              os << "otherwise ";
              print_braced(os, n.otherwise, depth + 1);
            }
            indent(os, depth);
            os << "}\n";
          } else if constexpr (std::is_same_v<T, Cycle>) {
            os << "cycle (" << n.condition.to_string() << ") ";
            print_braced(os, n.body, depth);
          } else {
            os << "critical :" << n.section << " ";
            print_braced(os, n.body, depth);
          }
        },
        node.kind);
  }
}

std::string quote(const std::string& s) { return Value(s).to_literal(); }

}  // namespace

WorkflowAst parse(std::string_view source) { return WorkflowParser(source).parse(); }

std::vector<Diagnostic> validate(const WorkflowAst& ast) {
  Validator v{ast, {}, {}};
  // Initializers may only read variables declared before them.
  for (const auto& decl : ast.context) {
    v.check_expr(decl.initializer, decl.location, v.declared);
    v.declared.insert(decl.name);
  }
  v.check_block(ast.body);
  return v.out;
}

std::vector<PositionId> positions(const WorkflowAst& ast) { return ast.position_order; }

std::string print(const WorkflowAst& ast) {
  std::ostringstream os;
  os << "workflow {\n";
  os << "  handler " << quote(ast.handler) << "\n";
  for (const auto& [name, uri] : ast.endpoints) os << "  endpoint " << name << ": " << quote(uri) << "\n";
  for (const auto& decl : ast.context) os << "  context " << decl.name << ": " << decl.initializer.to_string() << "\n";
  print_block(os, ast.body, 1);
  os << "}\n";
  return os.str();
}

}  // namespace wee
