#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wee/expression.hpp"
#include "wee/lexer.hpp"

namespace wee {

/// Symbolic label of an activity. Unique within a workflow; used as the
/// target of jumps and resume overrides.
struct PositionId {
  std::string value;

  PositionId() = default;
  explicit PositionId(std::string v) : value(std::move(v)) {}

  const std::string& str() const noexcept { return value; }
  auto operator<=>(const PositionId&) const = default;
};

struct Node;
using Block = std::vector<Node>;

/// Join condition of a parallel block: all spawned branches, or the first k.
struct WaitSpec {
  bool all = true;
  std::int64_t count = 0;

  static WaitSpec wait_all() { return {true, 0}; }
  static WaitSpec first(std::int64_t k) { return {false, k}; }
  friend bool operator==(const WaitSpec&, const WaitSpec&) = default;
};

struct CallActivity {
  PositionId position;
  std::string endpoint;
  std::vector<std::pair<std::string, Expr>> parameters;
};

struct ManipulateActivity {
  PositionId position;
  std::vector<Assignment> statements;
};

struct Parallel {
  WaitSpec wait;
  Block body;
};

struct ParallelBranch {
  Block body;
};

struct Alternative {
  Expr condition;
  Block body;
};

struct Choose {
  std::vector<Alternative> alternatives;
  bool has_otherwise = false;
  Block otherwise;
};

struct Cycle {
  Expr condition;
  Block body;
};

struct Critical {
  std::string section;
  Block body;
};

struct Node {
  std::variant<CallActivity, ManipulateActivity, Parallel, ParallelBranch, Choose, Cycle, Critical> kind;
  SourceLocation location;

  /// Position of an activity node, nullptr for control structures.
  const PositionId* position() const;
};

/// Number of child blocks of a node: 0 for activities, 1 for most structures,
/// alternatives (+1 with otherwise) for choose.
std::size_t child_block_count(const Node& node);
/// The child block with the given selector; for choose, selector
/// `alternatives.size()` names the otherwise block.
const Block& child_block(const Node& node, std::size_t selector);

/// Address of a node: [i0, s0, i1, s1, ..., ik] where each i is an index in a
/// block and each s selects a child block of the node at that index.
using NodePath = std::vector<std::size_t>;

struct ContextDecl {
  std::string name;
  Expr initializer;
  SourceLocation location;
};

struct WorkflowAst {
  std::string handler;
  std::vector<std::pair<std::string, std::string>> endpoints;  // symbol, URI; declaration order
  std::vector<ContextDecl> context;
  Block body;

  /// Activity positions in source order and their node paths; filled by parse().
  std::vector<PositionId> position_order;
  std::map<PositionId, NodePath> position_paths;

  std::optional<std::string> endpoint_uri(const std::string& symbol) const;
  const NodePath* path_of(const PositionId& position) const;
  const Node& node_at(const NodePath& path) const;
};

/// Rebuilds position_order and position_paths from the body. Throws
/// ParseError on duplicate positions.
void index_positions(WorkflowAst& ast);

/// Activities from `first` to `last` inclusive, in source order. Throws
/// Error if either is unknown or `last` precedes `first`.
std::vector<PositionId> position_range(const WorkflowAst& ast, const PositionId& first, const PositionId& last);

/// Structural equality, ignoring source locations.
bool same_structure(const WorkflowAst& a, const WorkflowAst& b);

}  // namespace wee
