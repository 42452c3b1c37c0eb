#include "wee/events.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "wee/errors.hpp"

namespace wee {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 14> kKindNames = {{
    {EventKind::InstanceStart, "instance_start"},
    {EventKind::ActivityStart, "activity_start"},
    {EventKind::ActivityEnd, "activity_end"},
    {EventKind::ContextChange, "context_change"},
    {EventKind::BranchFork, "branch_fork"},
    {EventKind::BranchJoin, "branch_join"},
    {EventKind::BranchEnd, "branch_end"},
    {EventKind::CriticalEnter, "critical_enter"},
    {EventKind::CriticalExit, "critical_exit"},
    {EventKind::Signal, "signal"},
    {EventKind::StopAcknowledged, "stop_acknowledged"},
    {EventKind::InstanceFinish, "instance_finish"},
    {EventKind::InstanceStop, "instance_stop"},
    {EventKind::Error, "error"},
}};

}  // namespace

std::string_view to_string(EventKind kind) noexcept {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

EventKind event_kind_from(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw Error("unknown event kind '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const EventRecord& e) {
  j = nlohmann::json{{"seq", e.seq},
                     {"wall_time", e.wall_time},
                     {"instance", e.instance},
                     {"branch", e.branch},
                     {"position", e.position ? nlohmann::json(e.position->value) : nlohmann::json(nullptr)},
                     {"kind", std::string(to_string(e.kind))},
                     {"detail", e.detail}};
}

void from_json(const nlohmann::json& j, EventRecord& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.wall_time = j.at("wall_time").get<std::string>();
  e.instance = j.at("instance").get<std::string>();
  e.branch = j.at("branch").get<std::string>();
  const auto& pos = j.at("position");
  e.position = pos.is_null() ? std::nullopt : std::optional<PositionId>(PositionId(pos.get<std::string>()));
  e.kind = event_kind_from(j.at("kind").get<std::string>());
  e.detail = j.value("detail", nlohmann::json::object());
}

std::vector<EventRecord> read_event_log(std::istream& in) {
  std::vector<EventRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<EventRecord>());
    } catch (const nlohmann::json::exception& ex) {
      throw Error("event log line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<EventRecord> read_event_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event log '" + path + "'");
  return read_event_log(in);
}

WallClock system_wall_clock() {
  return [] {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
  };
}

WallClock fixed_wall_clock() {
  return [] { return std::string("1970-01-01T00:00:00.000Z"); };
}

EventLog::EventLog(std::string instance_id, std::uint64_t first_seq, WallClock clock)
    : instance_id_(std::move(instance_id)), clock_(std::move(clock)), next_seq_(first_seq) {}

void EventLog::add_sink(std::ostream& out) {
  std::lock_guard lock(mutex_);
  sinks_.push_back(&out);
}

void EventLog::add_observer(Observer observer) {
  std::lock_guard lock(mutex_);
  observers_.push_back(std::move(observer));
}

EventRecord EventLog::emit(const std::string& branch, const PositionId* position, EventKind kind,
                           nlohmann::json detail) {
  std::lock_guard lock(mutex_);
  EventRecord rec;
  rec.seq = next_seq_++;
  rec.wall_time = clock_();
  rec.instance = instance_id_;
  rec.branch = branch;
  if (position) rec.position = *position;
  rec.kind = kind;
  rec.detail = std::move(detail);
  if (!sinks_.empty()) {
    const std::string line = nlohmann::json(rec).dump();
    for (std::ostream* out : sinks_) {
      *out << line << '\n';
      out->flush();
    }
  }
  records_.push_back(rec);
  for (const auto& obs : observers_) obs(rec);
  return rec;
}

std::vector<EventRecord> EventLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::uint64_t EventLog::next_seq() const {
  std::lock_guard lock(mutex_);
  return next_seq_;
}

}  // namespace wee
