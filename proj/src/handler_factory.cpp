#include "wee/handler_factory.hpp"

#include "wee/errors.hpp"
#include "wee/handlers/http.hpp"
#include "wee/handlers/jump.hpp"
#include "wee/handlers/mock.hpp"
#include "wee/handlers/recursive.hpp"
#include "wee/handlers/trigger.hpp"

namespace wee {

void HandlerBundle::drain() {
  if (auto* http = dynamic_cast<HttpHandler*>(primary_.get())) http->drain();
}

HandlerBundle make_handler(const HandlerSpec& spec, std::shared_ptr<const WorkflowAst> ast,
                           const EngineOptions& nested_options) {
  HandlerBundle b;
  const nlohmann::json script = spec.script.value_or(nlohmann::json::object());
  if (spec.kind == "mock") {
    b.primary_ = std::make_unique<MockHandler>(mock_script_from_json(script), spec.seed);
  } else if (spec.kind == "http") {
    b.primary_ = std::make_unique<HttpHandler>(HttpOptions{spec.timeout_ms, spec.passthrough_dir});
  } else if (spec.kind == "trigger") {
    std::vector<TriggerEvent> events;
    if (!spec.events_path.empty()) events = read_trigger_events(spec.events_path);
    b.primary_ = std::make_unique<TriggerHandler>(std::move(events), trigger_mode_from(spec.trigger_mode));
  } else if (spec.kind == "jump") {
    nlohmann::json table = script;
    HandlerWrapper* fallback = nullptr;
    if (script.contains("jumps")) {
      table = script.at("jumps");
      nlohmann::json rest = script;
      rest.erase("jumps");
      b.helpers_.push_back(std::make_unique<MockHandler>(mock_script_from_json(rest), spec.seed));
      fallback = b.helpers_.back().get();
    }
    JumpTable jt = jump_table_from_json(table);
    validate_jump_table(*ast, jt);
    b.primary_ = std::make_unique<JumpHandler>(std::move(jt), fallback);
  } else if (spec.kind == "recursive") {
    HandlerWrapper* fallback = nullptr;
    if (spec.script) {
      b.helpers_.push_back(std::make_unique<MockHandler>(mock_script_from_json(script), spec.seed));
      fallback = b.helpers_.back().get();
    }
    b.primary_ = std::make_unique<RecursiveHandler>(std::move(ast), spec.max_depth, fallback, nested_options);
  } else {
    throw Error("unknown handler '" + spec.kind + "' (mock, http, trigger, jump, recursive)");
  }
  return b;
}

}  // namespace wee
