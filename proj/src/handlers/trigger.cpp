#include "wee/handlers/trigger.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "wee/errors.hpp"

namespace wee {

namespace {

class SteadyTriggerClock : public TriggerClock {
 public:
  std::int64_t now_ms() const override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
  }
  bool real_time() const override { return true; }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

TriggerMode trigger_mode_from(const std::string& name) {
  if (name == "persistent") return TriggerMode::Persistent;
  if (name == "transient") return TriggerMode::Transient;
  throw Error("unknown trigger mode '" + name + "'");
}

std::vector<TriggerEvent> read_trigger_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trigger events '" + path + "'");
  std::vector<TriggerEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("t").get<std::int64_t>(), j.at("key").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error("trigger events line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::shared_ptr<TriggerClock> steady_trigger_clock() { return std::make_shared<SteadyTriggerClock>(); }

std::int64_t ManualTriggerClock::now_ms() const {
  std::lock_guard lk(mutex_);
  return now_;
}

void ManualTriggerClock::set(std::int64_t t) {
  std::lock_guard lk(mutex_);
  now_ = t;
}

std::optional<std::int64_t> resolve_trigger(TriggerMode mode, const std::vector<TriggerEvent>& events,
                                            const std::string& key, std::int64_t call_time) {
  std::optional<std::int64_t> best;
  for (const auto& e : events) {
    if (e.key != key) continue;
    if (mode == TriggerMode::Transient && e.t < call_time) continue;
    if (!best || e.t < *best) best = e.t;
  }
  if (best && mode == TriggerMode::Persistent) best = std::max(*best, call_time);
  return best;
}

TriggerHandler::TriggerHandler(std::vector<TriggerEvent> events, TriggerMode mode, std::shared_ptr<TriggerClock> clock)
    : mode_(mode), clock_(std::move(clock)) {
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  for (auto& e : events) slots_.push_back({std::move(e), false});
}

void TriggerHandler::inject(const std::string& key) {
  {
    std::lock_guard lk(mutex_);
    const std::int64_t now = clock_->now_ms();
    const auto at = std::upper_bound(slots_.begin(), slots_.end(), now,
                                     [](std::int64_t t, const Slot& s) { return t < s.event.t; });
    slots_.insert(at, Slot{{now, key}, false});
    ++generation_;
  }
  cv_.notify_all();
}

void TriggerHandler::notify() {
  {
    std::lock_guard lk(mutex_);
    ++generation_;
  }
  cv_.notify_all();
}

std::optional<std::int64_t> TriggerHandler::try_fire(TriggerMode mode, const std::string& key,
                                                     std::int64_t call_time) {
  std::lock_guard lk(mutex_);
  return try_fire_locked(mode, key, call_time);
}

std::optional<std::int64_t> TriggerHandler::try_fire_locked(TriggerMode mode, const std::string& key,
                                                            std::int64_t call_time) {
  const std::int64_t now = clock_->now_ms();
  for (auto& s : slots_) {
    if (s.consumed || s.event.key != key) continue;
    if (s.event.t > now) break;
    if (mode == TriggerMode::Transient && s.event.t < call_time) {
      s.consumed = true;  // withdrawn: nobody was waiting when it arrived
      continue;
    }
    s.consumed = true;
    return std::max(s.event.t, call_time);
  }
  return std::nullopt;
}

std::optional<std::int64_t> TriggerHandler::next_time_locked(const std::string& key) const {
  for (const auto& s : slots_) {
    if (!s.consumed && s.event.key == key) return s.event.t;
  }
  return std::nullopt;
}

HandlerOutcome TriggerHandler::call(const HandlerCall& call, std::stop_token stop_call) {
  std::string key = call.position.value;
  TriggerMode mode = mode_;
  try {
    if (const auto it = call.parameters.find("key"); it != call.parameters.end()) key = it->second.as_string();
    if (const auto it = call.parameters.find("mode"); it != call.parameters.end()) {
      mode = trigger_mode_from(it->second.as_string());
    }
  } catch (const std::exception& e) {
    return HandlerOutcome::error(e.what());
  }

  std::int64_t call_time = clock_->now_ms();
  if (call.passthrough) {
    // A resumed call keeps waiting as if it had never been interrupted.
    const auto colon = call.passthrough->rfind(':');
    try {
      call_time = std::stoll(call.passthrough->substr(colon + 1));
    } catch (const std::exception&) {
      return HandlerOutcome::error("malformed trigger passthrough '" + *call.passthrough + "'");
    }
  }

  std::unique_lock lk(mutex_);
  while (true) {
    if (const auto fired = try_fire_locked(mode, key, call_time)) {
      Values result;
      if (const auto it = call.parameters.find("into"); it != call.parameters.end() && it->second.is_string()) {
        result[it->second.as_string()] = Value(*fired);
      }
      return HandlerOutcome::result(std::move(result));
    }
    if (stop_call.stop_requested()) return HandlerOutcome::passthrough("trigger:" + key + ":" + std::to_string(call_time));
    auto wait = std::chrono::milliseconds(50);
    if (clock_->real_time()) {
      if (const auto next = next_time_locked(key)) {
        wait = std::chrono::milliseconds(std::clamp<std::int64_t>(*next - clock_->now_ms(), 0, 50));
      }
    }
    const std::uint64_t seen = generation_;
    cv_.wait_for(lk, stop_call, wait, [&] { return generation_ != seen; });
  }
}

}  // namespace wee
