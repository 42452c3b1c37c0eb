#pragma once

#include <atomic>
#include <memory>

#include "wee/engine.hpp"
#include "wee/handler.hpp"

namespace wee {

/// Runs calls to a "wee:self" endpoint as a nested, independent instance of
/// the same workflow with the call parameters as initial context, and returns
/// the nested final context (minus the parameters) as Result. Other endpoints
/// go to the fallback handler.
class RecursiveHandler : public HandlerWrapper {
 public:
  RecursiveHandler(std::shared_ptr<const WorkflowAst> ast, int depth_bound, HandlerWrapper* fallback = nullptr,
                   EngineOptions nested_options = {});

  HandlerOutcome call(const HandlerCall& call, std::stop_token stop_call) override;
  std::string name() const override { return "recursive"; }

  /// Nested instances started by this handler and its descendants.
  std::size_t nested_instances() const { return counter_->load(); }

 private:
  RecursiveHandler(std::shared_ptr<const WorkflowAst> ast, int depth_bound, HandlerWrapper* fallback,
                   EngineOptions nested_options, std::shared_ptr<std::atomic<std::size_t>> counter);

  std::shared_ptr<const WorkflowAst> ast_;
  int depth_bound_;
  HandlerWrapper* fallback_;
  EngineOptions nested_options_;
  std::shared_ptr<std::atomic<std::size_t>> counter_;
};

}  // namespace wee
