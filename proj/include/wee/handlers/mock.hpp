#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "wee/handler.hpp"

namespace wee {

/// One scripted answer. `block` makes the call wait until stop_call; it then
/// answers with `passthrough` (storing `result` under that token) or with
/// `result`.
struct MockOutcome {
  HandlerOutcome outcome;
  std::int64_t delay_min_ms = 0;
  std::int64_t delay_max_ms = 0;
  bool block = false;
  std::optional<std::string> passthrough;
  /// Instances started by the handler without notifying the engine.
  std::int64_t spawn = 0;
  std::int64_t spawn_ms = 0;
};

MockOutcome mock_outcome_from_json(const nlohmann::json& j);

struct MockPositionScript {
  std::vector<MockOutcome> outcomes;
  /// Answer once `outcomes` is exhausted; absent means exhaustion is an error.
  std::optional<MockOutcome> then;
};

struct MockScript {
  std::map<PositionId, MockPositionScript> positions;
  std::map<std::string, Values> stored;
};

/// Accepts {"positions": {...}, "stored": {...}} or a bare positions map.
/// A position maps to a list of outcomes or {"outcomes": [...], "then": o}.
MockScript mock_script_from_json(const nlohmann::json& j);
MockScript read_mock_script(const std::string& path);

/// Deterministic test double: replays scripted outcomes per position and
/// counts external invocations.
class MockHandler : public HandlerWrapper {
 public:
  explicit MockHandler(MockScript script, std::uint64_t seed = 0);
  ~MockHandler() override;

  HandlerOutcome call(const HandlerCall& call, std::stop_token stop_call) override;
  HandlerCapabilities capabilities() const override { return {true, true}; }
  std::string name() const override { return "mock"; }

  std::size_t invocations(const PositionId& position) const;
  std::size_t total_invocations() const;
  std::size_t stop_calls(const PositionId& position) const;
  std::map<std::string, Values> stored() const;
  std::size_t spawned() const;
  std::size_t spawns_completed() const;

 private:
  std::int64_t delay_for(const PositionId& position, std::size_t n, const MockOutcome& o) const;

  mutable std::mutex mutex_;
  MockScript script_;
  std::uint64_t seed_;
  std::map<PositionId, std::size_t> invocations_;
  std::map<PositionId, std::size_t> stop_calls_;
  std::vector<std::thread> spawned_;
  std::atomic<std::size_t> spawns_completed_{0};
};

}  // namespace wee
