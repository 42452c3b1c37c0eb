#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wee/engine.hpp"
#include "wee/handler.hpp"

namespace wee {

/// Selection and configuration of a handler wrapper by name.
struct HandlerSpec {
  std::string kind;  // mock | http | trigger | jump | recursive
  /// mock: outcome script; jump: jump table, or {"jumps": table, ...mock
  /// script for other positions}; recursive: optional mock script for
  /// non-recursive endpoints.
  std::optional<nlohmann::json> script;
  std::uint64_t seed = 0;
  std::string events_path;
  std::string trigger_mode = "persistent";
  int max_depth = 16;
  int timeout_ms = 30'000;
  std::string passthrough_dir;
};

/// Owns a handler and any helpers it delegates to.
class HandlerBundle {
 public:
  HandlerWrapper& handler() { return *primary_; }
  /// Waits for background work (detached HTTP requests).
  void drain();

 private:
  friend HandlerBundle make_handler(const HandlerSpec&, std::shared_ptr<const WorkflowAst>, const EngineOptions&);
  std::vector<std::unique_ptr<HandlerWrapper>> helpers_;
  std::unique_ptr<HandlerWrapper> primary_;
};

HandlerBundle make_handler(const HandlerSpec& spec, std::shared_ptr<const WorkflowAst> ast,
                           const EngineOptions& nested_options = {});

}  // namespace wee
