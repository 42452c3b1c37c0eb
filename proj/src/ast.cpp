#include "wee/ast.hpp"

#include <algorithm>

#include "wee/errors.hpp"

namespace wee {

namespace {

void index_block(const Block& block, NodePath& prefix, WorkflowAst& ast) {
  for (std::size_t i = 0; i < block.size(); ++i) {
    const Node& node = block[i];
    prefix.push_back(i);
    if (const PositionId* pos = node.position()) {
      if (ast.position_paths.count(*pos) != 0) {
        throw ParseError("duplicate position '" + pos->value + "'", node.location.line, node.location.column);
      }
      ast.position_paths.emplace(*pos, prefix);
      ast.position_order.push_back(*pos);
    }
    for (std::size_t s = 0; s < child_block_count(node); ++s) {
      prefix.push_back(s);
      index_block(child_block(node, s), prefix, ast);
      prefix.pop_back();
    }
    prefix.pop_back();
  }
}

bool same_block(const Block& a, const Block& b);

bool same_params(const std::vector<std::pair<std::string, Expr>>& a,
                 const std::vector<std::pair<std::string, Expr>>& b) {
  return a == b;
}

bool same_node(const Node& a, const Node& b) {
  if (a.kind.index() != b.kind.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.kind);
        if constexpr (std::is_same_v<T, CallActivity>) {
          return x.position == y.position && x.endpoint == y.endpoint && same_params(x.parameters, y.parameters);
        } else if constexpr (std::is_same_v<T, ManipulateActivity>) {
          return x.position == y.position && x.statements == y.statements;
        } else if constexpr (std::is_same_v<T, Parallel>) {
          return x.wait == y.wait && same_block(x.body, y.body);
        } else if constexpr (std::is_same_v<T, ParallelBranch>) {
          return same_block(x.body, y.body);
        } else if constexpr (std::is_same_v<T, Choose>) {
          if (x.alternatives.size() != y.alternatives.size() || x.has_otherwise != y.has_otherwise) return false;
          for (std::size_t i = 0; i < x.alternatives.size(); ++i) {
            if (!(x.alternatives[i].condition == y.alternatives[i].condition)) return false;
            if (!same_block(x.alternatives[i].body, y.alternatives[i].body)) return false;
          }
          return same_block(x.otherwise, y.otherwise);
        } else if constexpr (std::is_same_v<T, Cycle>) {
          return x.condition == y.condition && same_block(x.body, y.body);
        } else {
          return x.section == y.section && same_block(x.body, y.body);
        }
      },
      a.kind);
}

bool same_block(const Block& a, const Block& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_node(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

const PositionId* Node::position() const {
  if (const auto* c = std::get_if<CallActivity>(&kind)) return &c->position;
  if (const auto* m = std::get_if<ManipulateActivity>(&kind)) return &m->position;
  return nullptr;
}

std::size_t child_block_count(const Node& node) {
  return std::visit(
      [](const auto& n) -> std::size_t {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, CallActivity> || std::is_same_v<T, ManipulateActivity>) {
          return 0;
        } else if constexpr (std::is_same_v<T, Choose>) {
          return n.alternatives.size() + (n.has_otherwise ? 1 : 0);
        } else {
          return 1;
        }
      },
      node.kind);
}

const Block& child_block(const Node& node, std::size_t selector) {
  if (const auto* c = std::get_if<Choose>(&node.kind)) {
    if (selector < c->alternatives.size()) return c->alternatives[selector].body;
    if (selector == c->alternatives.size() && c->has_otherwise) return c->otherwise;
    throw Error("choose has no block " + std::to_string(selector));
  }
  if (selector != 0) throw Error("node has no block " + std::to_string(selector));
  if (const auto* p = std::get_if<Parallel>(&node.kind)) return p->body;
  if (const auto* b = std::get_if<ParallelBranch>(&node.kind)) return b->body;
  if (const auto* c = std::get_if<Cycle>(&node.kind)) return c->body;
  if (const auto* c = std::get_if<Critical>(&node.kind)) return c->body;
  throw Error("activity has no child block");
}

std::optional<std::string> WorkflowAst::endpoint_uri(const std::string& symbol) const {
  for (const auto& [name, uri] : endpoints) {
    if (name == symbol) return uri;
  }
  return std::nullopt;
}

const NodePath* WorkflowAst::path_of(const PositionId& position) const {
  const auto it = position_paths.find(position);
  return it == position_paths.end() ? nullptr : &it->second;
}

const Node& WorkflowAst::node_at(const NodePath& path) const {
  if (path.empty() || path.size() % 2 == 0) throw Error("malformed node path");
  const Block* block = &body;
  for (std::size_t k = 0;; k += 2) {
    if (path[k] >= block->size()) throw Error("node path out of range");
    const Node& node = (*block)[path[k]];
    if (k + 1 == path.size()) return node;
    if (path[k + 1] >= child_block_count(node)) throw Error("node path out of range");
    block = &child_block(node, path[k + 1]);
  }
}

void index_positions(WorkflowAst& ast) {
  ast.position_order.clear();
  ast.position_paths.clear();
  NodePath prefix;
  index_block(ast.body, prefix, ast);
}

bool same_structure(const WorkflowAst& a, const WorkflowAst& b) {
  if (a.handler != b.handler || a.endpoints != b.endpoints) return false;
  if (a.context.size() != b.context.size()) return false;
  for (std::size_t i = 0; i < a.context.size(); ++i) {
    if (a.context[i].name != b.context[i].name) return false;
    if (!(a.context[i].initializer == b.context[i].initializer)) return false;
  }
  return same_block(a.body, b.body);
}

std::vector<PositionId> position_range(const WorkflowAst& ast, const PositionId& first, const PositionId& last) {
  const auto& order = ast.position_order;
  const auto a = std::find(order.begin(), order.end(), first);
  const auto b = std::find(order.begin(), order.end(), last);
  if (a == order.end()) throw Error("unknown position '" + first.value + "'");
  if (b == order.end()) throw Error("unknown position '" + last.value + "'");
  if (b < a) throw Error("region end '" + last.value + "' precedes its start '" + first.value + "'");
  return {a, b + 1};
}

}  // namespace wee
