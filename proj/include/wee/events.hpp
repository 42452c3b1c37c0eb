#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wee/ast.hpp"

namespace wee {

enum class EventKind {
  InstanceStart,
  ActivityStart,
  ActivityEnd,
  ContextChange,
  BranchFork,
  BranchJoin,
  BranchEnd,
  CriticalEnter,
  CriticalExit,
  Signal,
  StopAcknowledged,
  InstanceFinish,
  InstanceStop,
  Error,
};

std::string_view to_string(EventKind kind) noexcept;
EventKind event_kind_from(std::string_view name);

/// One line of the execution trace.
struct EventRecord {
  std::uint64_t seq = 0;
  std::string wall_time;
  std::string instance;
  std::string branch;
  std::optional<PositionId> position;
  EventKind kind = EventKind::InstanceStart;
  nlohmann::json detail = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const EventRecord& e);
void from_json(const nlohmann::json& j, EventRecord& e);

std::vector<EventRecord> read_event_log(std::istream& in);
std::vector<EventRecord> read_event_log_file(const std::string& path);

/// Produces the wall_time field. The default is UTC with millisecond resolution.
using WallClock = std::function<std::string()>;
WallClock system_wall_clock();
/// Always returns the epoch; makes traces byte-comparable across runs.
WallClock fixed_wall_clock();

/// Append-only, thread-safe trace of one instance. Sequence numbers are
/// gap-free; every record is written to the sinks as one JSON line and
/// flushed before emit() returns.
class EventLog {
 public:
  using Observer = std::function<void(const EventRecord&)>;

  explicit EventLog(std::string instance_id, std::uint64_t first_seq = 1, WallClock clock = system_wall_clock());

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Sink stream must outlive the log.
  void add_sink(std::ostream& out);
  /// Observers run under the log's lock, in sequence order; they must not emit.
  void add_observer(Observer observer);

  EventRecord emit(const std::string& branch, const PositionId* position, EventKind kind,
                   nlohmann::json detail = nlohmann::json::object());

  std::vector<EventRecord> records() const;
  std::uint64_t next_seq() const;
  const std::string& instance_id() const noexcept { return instance_id_; }

 private:
  std::string instance_id_;
  WallClock clock_;
  mutable std::mutex mutex_;
  std::uint64_t next_seq_;
  std::vector<EventRecord> records_;
  std::vector<std::ostream*> sinks_;
  std::vector<Observer> observers_;
};

}  // namespace wee
