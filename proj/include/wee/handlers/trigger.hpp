#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "wee/handler.hpp"

namespace wee {

enum class TriggerMode { Persistent, Transient };

TriggerMode trigger_mode_from(const std::string& name);

struct TriggerEvent {
  std::int64_t t = 0;  // milliseconds since the handler's epoch
  std::string key;
};

/// JSON Lines of {"t": number, "key": string}.
std::vector<TriggerEvent> read_trigger_events(const std::string& path);

/// Time source of the trigger handler, in milliseconds.
class TriggerClock {
 public:
  virtual ~TriggerClock() = default;
  virtual std::int64_t now_ms() const = 0;
  /// True if waiting should use a timeout derived from event times.
  virtual bool real_time() const = 0;
};

/// Milliseconds since construction.
std::shared_ptr<TriggerClock> steady_trigger_clock();

/// Clock moved explicitly; for tests.
class ManualTriggerClock : public TriggerClock {
 public:
  std::int64_t now_ms() const override;
  bool real_time() const override { return false; }
  void set(std::int64_t t);

 private:
  mutable std::mutex mutex_;
  std::int64_t now_ = 0;
};

/// Time at which a single call for `key`, blocked from `call_time`, fires
/// given the scheduled events, or nullopt if it stays blocked. Persistent:
/// the earliest matching event, no earlier than the call. Transient: the
/// earliest matching event arriving at or after the call.
std::optional<std::int64_t> resolve_trigger(TriggerMode mode, const std::vector<TriggerEvent>& events,
                                            const std::string& key, std::int64_t call_time);

/// Blocks a call until an event for its key is available. The key is the
/// "key" parameter (default: the position); "mode" may override the handler
/// mode per call. Each event satisfies at most one call.
class TriggerHandler : public HandlerWrapper {
 public:
  TriggerHandler(std::vector<TriggerEvent> events, TriggerMode mode,
                 std::shared_ptr<TriggerClock> clock = steady_trigger_clock());

  HandlerOutcome call(const HandlerCall& call, std::stop_token stop_call) override;
  HandlerCapabilities capabilities() const override { return {false, true}; }
  std::string name() const override { return "trigger"; }

  /// Adds an event at the current time.
  void inject(const std::string& key);
  /// Wakes blocked calls; required after moving a manual clock.
  void notify();
  /// One non-blocking matching step for a call blocked since `call_time`;
  /// consumes and returns the matched event time.
  std::optional<std::int64_t> try_fire(TriggerMode mode, const std::string& key, std::int64_t call_time);

 private:
  struct Slot {
    TriggerEvent event;
    bool consumed = false;
  };

  std::optional<std::int64_t> try_fire_locked(TriggerMode mode, const std::string& key, std::int64_t call_time);
  std::optional<std::int64_t> next_time_locked(const std::string& key) const;

  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::uint64_t generation_ = 0;
  std::vector<Slot> slots_;
  TriggerMode mode_;
  std::shared_ptr<TriggerClock> clock_;
};

}  // namespace wee
