#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "wee/engine.hpp"
#include "wee/handler.hpp"

namespace wee {

struct JumpRule {
  Expr condition;
  PositionId target;
};

using JumpTable = std::map<PositionId, JumpRule>;

/// {"pos": {"condition": "i < 2", "target": "a"}, ...}
JumpTable jump_table_from_json(const nlohmann::json& j);

/// Throws Error naming the first rule whose source or target is not an
/// activity of `ast` or whose jump the engine would reject.
void validate_jump_table(const WorkflowAst& ast, const JumpTable& table);

/// Evaluates a per-position condition against the call's context snapshot
/// (parameters shadow context names) and answers Jump(target) when it holds.
/// Positions without a rule answer Result({}) or go to the fallback handler.
class JumpHandler : public HandlerWrapper {
 public:
  explicit JumpHandler(JumpTable table, HandlerWrapper* fallback = nullptr);

  HandlerOutcome call(const HandlerCall& call, std::stop_token stop_call) override;
  HandlerCapabilities capabilities() const override { return {true, false}; }
  std::string name() const override { return "jump"; }

 private:
  JumpTable table_;
  HandlerWrapper* fallback_;
};

}  // namespace wee
