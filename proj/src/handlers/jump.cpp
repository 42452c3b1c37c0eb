#include "wee/handlers/jump.hpp"

#include "wee/errors.hpp"

namespace wee {

JumpTable jump_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("jump table must be a JSON object");
  JumpTable table;
  for (const auto& [pos, rule] : j.items()) {
    try {
      table.emplace(PositionId(pos), JumpRule{parse_expression(rule.at("condition").get<std::string>()),
                                              PositionId(rule.at("target").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw Error("jump rule '" + pos + "': " + e.what());
    }
  }
  return table;
}

void validate_jump_table(const WorkflowAst& ast, const JumpTable& table) {
  for (const auto& [pos, rule] : table) {
    const NodePath* from = ast.path_of(pos);
    const NodePath* to = ast.path_of(rule.target);
    if (!from) throw Error("jump rule names unknown position '" + pos.value + "'");
    if (!to) throw Error("jump rule '" + pos.value + "' targets unknown position '" + rule.target.value + "'");
    if (!jump_is_legal(ast, *from, *to)) {
      throw Error("jump rule '" + pos.value + "' -> '" + rule.target.value + "' crosses a parallel boundary");
    }
  }
}

JumpHandler::JumpHandler(JumpTable table, HandlerWrapper* fallback) : table_(std::move(table)), fallback_(fallback) {}

HandlerOutcome JumpHandler::call(const HandlerCall& call, std::stop_token stop_call) {
  const auto it = table_.find(call.position);
  if (it == table_.end()) {
    return fallback_ ? fallback_->call(call, stop_call) : HandlerOutcome::result();
  }
  Values scope = call.context.values;
  for (const auto& [name, value] : call.parameters) scope[name] = value;
  Value v;
  try {
    v = it->second.condition.eval(scope);
  } catch (const Error& e) {
    return HandlerOutcome::error(e.what());
  }
  if (!v.is_boolean()) return HandlerOutcome::error("jump condition must be boolean");
  if (v.as_boolean()) return HandlerOutcome::jump(it->second.target);
  return fallback_ ? fallback_->call(call, stop_call) : HandlerOutcome::result();
}

}  // namespace wee
