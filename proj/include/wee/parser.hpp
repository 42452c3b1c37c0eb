#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "wee/ast.hpp"

namespace wee {

/// Parses `.wee` source. Throws ParseError (with line/column) on syntax
/// errors, duplicate positions, duplicate context/endpoint names,
/// parallel_branch outside a parallel body and wait counts below 1.
WorkflowAst parse(std::string_view source);

struct Diagnostic {
  std::string message;
  SourceLocation location;
};

/// Reports every reference to an undeclared endpoint or context variable.
/// An empty result means the workflow is executable.
std::vector<Diagnostic> validate(const WorkflowAst& ast);

/// Activity positions in source order.
std::vector<PositionId> positions(const WorkflowAst& ast);

/// Canonical source form; parse(print(ast)) is structurally equal to ast.
std::string print(const WorkflowAst& ast);

}  // namespace wee
