#include "wee/handlers/mock.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "wee/errors.hpp"

namespace wee {

namespace {

std::uint64_t mix(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sleeps up to `ms`; returns false if stop was requested first.
bool interruptible_sleep(std::int64_t ms, std::stop_token stop) {
  if (ms <= 0) return !stop.stop_requested();
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lk(m);
  return !cv.wait_for(lk, stop, std::chrono::milliseconds(ms), [] { return false; });
}

}  // namespace

MockOutcome mock_outcome_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("mock outcome must be an object");
  MockOutcome o;
  if (j.contains("error")) {
    o.outcome = HandlerOutcome::error(j.at("error").get<std::string>());
  } else if (j.contains("jump")) {
    o.outcome = HandlerOutcome::jump(PositionId(j.at("jump").get<std::string>()));
  } else if (j.value("stop", false)) {
    o.outcome = HandlerOutcome::stop();
  } else {
    o.outcome = HandlerOutcome::result(j.contains("result") ? values_from_json(j.at("result")) : Values{});
  }
  if (j.contains("delay_ms")) {
    const auto& d = j.at("delay_ms");
    if (d.is_array()) {
      if (d.size() != 2) throw Error("delay_ms range must be [lo, hi]");
      o.delay_min_ms = d.at(0).get<std::int64_t>();
      o.delay_max_ms = d.at(1).get<std::int64_t>();
    } else {
      o.delay_min_ms = o.delay_max_ms = d.get<std::int64_t>();
    }
    if (o.delay_min_ms < 0 || o.delay_max_ms < o.delay_min_ms) throw Error("invalid delay_ms");
  }
  o.block = j.value("block", false);
  if (j.contains("passthrough")) o.passthrough = j.at("passthrough").get<std::string>();
  o.spawn = j.value("spawn", std::int64_t{0});
  o.spawn_ms = j.value("spawn_ms", std::int64_t{0});
  if (o.spawn < 0 || o.spawn_ms < 0) throw Error("invalid spawn");
  return o;
}

MockScript mock_script_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("mock script must be a JSON object");
  MockScript s;
  const nlohmann::json* positions = &j;
  if (j.contains("positions")) positions = &j.at("positions");
  if (j.contains("stored")) {
    for (const auto& [token, values] : j.at("stored").items()) s.stored[token] = values_from_json(values);
  }
  for (const auto& [pos, entry] : positions->items()) {
    if (positions == &j && (pos == "stored" || pos == "positions")) continue;
    MockPositionScript ps;
    if (entry.is_array()) {
      for (const auto& o : entry) ps.outcomes.push_back(mock_outcome_from_json(o));
    } else if (entry.is_object() && (entry.contains("outcomes") || entry.contains("then"))) {
      for (const auto& o : entry.value("outcomes", nlohmann::json::array())) {
        ps.outcomes.push_back(mock_outcome_from_json(o));
      }
      if (entry.contains("then")) ps.then = mock_outcome_from_json(entry.at("then"));
    } else {
      ps.outcomes.push_back(mock_outcome_from_json(entry));
    }
    s.positions[PositionId(pos)] = std::move(ps);
  }
  return s;
}

MockScript read_mock_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open script '" + path + "'");
  try {
    return mock_script_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("script '" + path + "': " + e.what());
  }
}

MockHandler::MockHandler(MockScript script, std::uint64_t seed) : script_(std::move(script)), seed_(seed) {}

MockHandler::~MockHandler() {
  for (auto& t : spawned_) t.join();
}

std::int64_t MockHandler::delay_for(const PositionId& position, std::size_t n, const MockOutcome& o) const {
  if (o.delay_max_ms == o.delay_min_ms) return o.delay_min_ms;
  std::mt19937_64 rng(mix(seed_ * 0x9e3779b97f4a7c15ULL + n, position.value));
  return std::uniform_int_distribution<std::int64_t>(o.delay_min_ms, o.delay_max_ms)(rng);
}

HandlerOutcome MockHandler::call(const HandlerCall& call, std::stop_token stop_call) {
  std::stop_callback count_stop(stop_call, [this, pos = call.position] {
    std::lock_guard lk(mutex_);
    ++stop_calls_[pos];
  });

  MockOutcome o;
  std::int64_t delay = 0;
  {
    std::lock_guard lk(mutex_);
    if (call.passthrough) {
      const auto it = script_.stored.find(*call.passthrough);
      if (it == script_.stored.end()) return HandlerOutcome::error("unknown passthrough '" + *call.passthrough + "'");
      return HandlerOutcome::result(it->second);
    }
    const auto it = script_.positions.find(call.position);
    if (it == script_.positions.end()) {
      return HandlerOutcome::error("position '" + call.position.value + "' is not scripted");
    }
    std::size_t& n = invocations_[call.position];
    if (n < it->second.outcomes.size()) {
      o = it->second.outcomes[n];
    } else if (it->second.then) {
      o = *it->second.then;
    } else {
      return HandlerOutcome::error("script for '" + call.position.value + "' exhausted");
    }
    delay = delay_for(call.position, n, o);
    ++n;
    for (std::int64_t k = 0; k < o.spawn; ++k) {
      spawned_.emplace_back([this, ms = o.spawn_ms] {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        spawns_completed_.fetch_add(1);
      });
    }
  }

  const bool completed = interruptible_sleep(delay, stop_call) && !o.block;
  if (o.block && !stop_call.stop_requested()) {
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lk(m);
    cv.wait(lk, stop_call, [] { return false; });
  }
  if (!completed && o.passthrough) {
    std::lock_guard lk(mutex_);
    if (const auto* r = std::get_if<HandlerOutcome::Result>(&o.outcome.value)) script_.stored[*o.passthrough] = r->values;
    return HandlerOutcome::passthrough(*o.passthrough);
  }
  return o.outcome;
}

std::size_t MockHandler::invocations(const PositionId& position) const {
  std::lock_guard lk(mutex_);
  const auto it = invocations_.find(position);
  return it == invocations_.end() ? 0 : it->second;
}

std::size_t MockHandler::total_invocations() const {
  std::lock_guard lk(mutex_);
  std::size_t total = 0;
  for (const auto& [pos, n] : invocations_) total += n;
  return total;
}

std::size_t MockHandler::stop_calls(const PositionId& position) const {
  std::lock_guard lk(mutex_);
  const auto it = stop_calls_.find(position);
  return it == stop_calls_.end() ? 0 : it->second;
}

std::map<std::string, Values> MockHandler::stored() const {
  std::lock_guard lk(mutex_);
  return script_.stored;
}

std::size_t MockHandler::spawned() const {
  std::lock_guard lk(mutex_);
  return spawned_.size();
}

std::size_t MockHandler::spawns_completed() const { return spawns_completed_.load(); }

}  // namespace wee
