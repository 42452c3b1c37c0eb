#include "wee/handlers/recursive.hpp"

#include <algorithm>

namespace wee {

RecursiveHandler::RecursiveHandler(std::shared_ptr<const WorkflowAst> ast, int depth_bound, HandlerWrapper* fallback,
                                   EngineOptions nested_options)
    : RecursiveHandler(std::move(ast), depth_bound, fallback, std::move(nested_options),
                       std::make_shared<std::atomic<std::size_t>>(0)) {}

RecursiveHandler::RecursiveHandler(std::shared_ptr<const WorkflowAst> ast, int depth_bound, HandlerWrapper* fallback,
                                   EngineOptions nested_options, std::shared_ptr<std::atomic<std::size_t>> counter)
    : ast_(std::move(ast)),
      depth_bound_(depth_bound),
      fallback_(fallback),
      nested_options_(std::move(nested_options)),
      counter_(std::move(counter)) {}

HandlerOutcome RecursiveHandler::call(const HandlerCall& call, std::stop_token stop_call) {
  if (call.endpoint != "wee:self") {
    if (fallback_) return fallback_->call(call, stop_call);
    return HandlerOutcome::error("recursive handler cannot serve endpoint '" + call.endpoint + "'");
  }
  if (depth_bound_ <= 0) return HandlerOutcome::error("recursion depth bound exhausted");
  for (const auto& [name, value] : call.parameters) {
    const bool declared =
        std::any_of(ast_->context.begin(), ast_->context.end(), [&](const ContextDecl& d) { return d.name == name; });
    if (!declared) return HandlerOutcome::error("parameter '" + name + "' is not a context variable");
  }

  RecursiveHandler child(ast_, depth_bound_ - 1, fallback_, nested_options_, counter_);
  EngineOptions options = nested_options_;
  options.instance_id = call.instance + "/" + call.position.value;
  options.context_overrides = call.parameters;
  Instance nested(ast_, child, options);
  counter_->fetch_add(1);
  nested.start();
  std::stop_callback forward(stop_call, [&nested] { nested.stop(); });
  const RunResult r = nested.wait();
  if (r.error) return HandlerOutcome::error("nested instance failed: " + *r.error);
  if (r.lifecycle != Lifecycle::Finished) return HandlerOutcome::error("nested instance stopped");

  Values result = nested.store().snapshot().values;
  for (const auto& [name, value] : call.parameters) result.erase(name);
  return HandlerOutcome::result(std::move(result));
}

}  // namespace wee
