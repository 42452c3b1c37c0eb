#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wee/errors.hpp"
#include "wee/expression.hpp"
#include "wee/harness.hpp"

namespace wee::harness {
namespace {

using nlohmann::json;

struct Span {
  std::string branch;
  std::string position;
  std::size_t start = 0;
  std::size_t end = 0;
};

bool is_kind(const EventRecord& e, EventKind k) { return e.kind == k; }

bool at(const EventRecord& e, EventKind k, const std::string& position) {
  return e.kind == k && e.position && e.position->value == position;
}

bool is_signal(const EventRecord& e, const std::string& name) {
  return e.kind == EventKind::Signal && e.detail.value("signal", "") == name;
}

bool within(const std::string& id, const std::string& ancestor) {
  return id == ancestor || (id.size() > ancestor.size() && id.compare(0, ancestor.size(), ancestor) == 0 &&
                            id[ancestor.size()] == '.');
}

std::vector<Span> activity_spans(const std::vector<EventRecord>& ev) {
  std::vector<Span> spans;
  std::map<std::string, std::size_t> open;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const auto& e = ev[i];
    if (e.kind == EventKind::ActivityStart && e.position) {
      open[e.branch] = spans.size();
      spans.push_back({e.branch, e.position->value, i, ev.size()});
    } else if (e.kind == EventKind::ActivityEnd && e.position) {
      const auto it = open.find(e.branch);
      if (it != open.end()) {
        spans[it->second].end = i;
        open.erase(it);
      }
    }
  }
  return spans;
}

std::vector<std::size_t> indices(const std::vector<EventRecord>& ev, EventKind k, const std::string& position) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (at(ev[i], k, position)) out.push_back(i);
  }
  return out;
}

std::size_t started(const std::vector<EventRecord>& ev, const std::string& position) {
  return indices(ev, EventKind::ActivityStart, position).size();
}

std::vector<std::string> strings(const json& j) { return j.get<std::vector<std::string>>(); }

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

bool compare_count(const json& a, std::size_t n, std::string& detail) {
  std::ostringstream os;
  os << "observed " << n;
  detail = os.str();
  if (a.contains("equals") && n != a.at("equals").get<std::size_t>()) return false;
  if (a.contains("min") && n < a.at("min").get<std::size_t>()) return false;
  if (a.contains("max") && n > a.at("max").get<std::size_t>()) return false;
  return true;
}

AssertionResult check_order(const json& a, const TraceView& t) {
  const auto before = a.at("before").get<std::string>();
  const auto after = a.at("after").get<std::string>();
  const auto ends = indices(t.events, EventKind::ActivityEnd, before);
  const auto starts = indices(t.events, EventKind::ActivityStart, after);
  if (ends.empty() || starts.empty()) return {"order", false, "missing " + (ends.empty() ? before : after)};
  const bool ok = ends.back() < starts.front();
  return {"order", ok, before + " ends before " + after + " starts"};
}

AssertionResult check_sequence(const json& a, const TraceView& t) {
  const auto expected = strings(a.at("positions"));
  std::vector<std::string> seen;
  for (const auto& e : t.events) {
    if (e.kind == EventKind::ActivityStart && e.position) seen.push_back(e.position->value);
  }
  return {"sequence", seen == expected, "observed [" + join_list(seen) + "]"};
}

AssertionResult check_join_all(const TraceView& t) {
  std::size_t joins = 0;
  for (std::size_t j = 0; j < t.events.size(); ++j) {
    const auto& e = t.events[j];
    if (e.kind != EventKind::BranchJoin || e.detail.value("wait", "") != "all") continue;
    ++joins;
    if (e.detail.value("arrived", 0) != e.detail.value("spawned", -1)) {
      return {"join_all", false, "join in branch " + e.branch + " fired before all branches arrived"};
    }
    for (const auto& child : strings(e.detail.value("children", json::array()))) {
      const bool ended = std::any_of(t.events.begin(), t.events.begin() + static_cast<std::ptrdiff_t>(j),
                                     [&](const EventRecord& x) { return x.kind == EventKind::BranchEnd && x.branch == child; });
      if (!ended) return {"join_all", false, "branch " + child + " had not ended at the join"};
    }
  }
  if (joins == 0) return {"join_all", false, "no synchronizing join"};
  return {"join_all", true, std::to_string(joins) + " joins"};
}

AssertionResult check_partial_join(const json& a, const TraceView& t) {
  const auto k = a.at("k").get<std::size_t>();
  std::size_t joins = 0;
  for (std::size_t j = 0; j < t.events.size(); ++j) {
    const auto& e = t.events[j];
    if (e.kind != EventKind::BranchJoin || e.detail.value("wait", "") == "all") continue;
    ++joins;
    std::size_t ended = 0;
    for (const auto& child : strings(e.detail.value("children", json::array()))) {
      std::optional<std::size_t> end_at, nln_at;
      for (std::size_t i = 0; i < j; ++i) {
        const auto& x = t.events[i];
        if (x.branch != child) continue;
        if (x.kind == EventKind::BranchEnd) end_at = i;
        if (is_signal(x, "no_longer_necessary")) nln_at = i;
      }
      if (end_at && nln_at) return {"partial_join", false, "branch " + child + " both ended and was cancelled"};
      if (!end_at && !nln_at) return {"partial_join", false, "branch " + child + " neither ended nor was cancelled"};
      if (end_at) {
        ++ended;
        continue;
      }
      for (std::size_t i = *nln_at + 1; i < t.events.size(); ++i) {
        if (t.events[i].kind == EventKind::ActivityStart && within(t.events[i].branch, child)) {
          return {"partial_join", false, "cancelled branch " + child + " started an activity"};
        }
      }
    }
    if (ended != k) {
      return {"partial_join", false, std::to_string(ended) + " branches completed, expected " + std::to_string(k)};
    }
  }
  if (a.contains("joins") && joins != a.at("joins").get<std::size_t>()) {
    return {"partial_join", false, std::to_string(joins) + " partial joins"};
  }
  if (joins == 0) return {"partial_join", false, "no partial join"};
  return {"partial_join", true, std::to_string(joins) + " joins with " + std::to_string(k) + " completed"};
}

std::optional<std::string> critical_violation(const std::vector<EventRecord>& ev, const std::string& only) {
  std::map<std::string, std::pair<std::string, int>> owner;
  for (const auto& e : ev) {
    if (e.kind != EventKind::CriticalEnter && e.kind != EventKind::CriticalExit) continue;
    const auto section = e.detail.value("section", "");
    if (!only.empty() && section != only) continue;
    auto& [branch, depth] = owner[section];
    if (e.kind == EventKind::CriticalEnter) {
      if (depth > 0 && branch != e.branch) {
        return "branch " + e.branch + " entered '" + section + "' held by " + branch;
      }
      branch = e.branch;
      ++depth;
    } else {
      if (depth == 0 || branch != e.branch) return "branch " + e.branch + " left '" + section + "' it did not hold";
      --depth;
    }
  }
  return std::nullopt;
}

AssertionResult check_activity_spans(const json& a, const TraceView& t) {
  std::set<std::string> only;
  if (a.contains("positions")) {
    for (const auto& p : strings(a.at("positions"))) only.insert(p);
  }
  std::vector<Span> spans;
  for (auto& s : activity_spans(t.events)) {
    if (only.empty() || only.count(s.position)) spans.push_back(s);
  }
  for (std::size_t i = 0; i < spans.size(); ++i) {
    for (std::size_t j = i + 1; j < spans.size(); ++j) {
      if (spans[j].start < spans[i].end && spans[i].start < spans[j].end) {
        return {"activity_spans_disjoint", false, spans[i].position + " overlaps " + spans[j].position};
      }
    }
  }
  return {"activity_spans_disjoint", true, std::to_string(spans.size()) + " spans"};
}

AssertionResult check_branch_spans(const TraceView& t) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> span;
  for (const auto& s : activity_spans(t.events)) {
    if (s.branch == "0") continue;
    auto [it, fresh] = span.emplace(s.branch, std::make_pair(s.start, s.end));
    if (!fresh) {
      it->second.first = std::min(it->second.first, s.start);
      it->second.second = std::max(it->second.second, s.end);
    }
  }
  if (span.size() < 2) return {"branch_spans_disjoint", false, "fewer than two branches ran activities"};
  for (auto i = span.begin(); i != span.end(); ++i) {
    for (auto j = std::next(i); j != span.end(); ++j) {
      if (j->second.first < i->second.second && i->second.first < j->second.second) {
        return {"branch_spans_disjoint", false, "branches " + i->first + " and " + j->first + " interleave"};
      }
    }
  }
  return {"branch_spans_disjoint", true, std::to_string(span.size()) + " branches"};
}

AssertionResult check_between(const json& a, const TraceView& t) {
  const auto position = a.at("position").get<std::string>();
  const auto opener = a.at("after").get<std::string>();
  const auto closer = a.at("before").get<std::string>();
  const auto spans = activity_spans(t.events);
  const auto opened = indices(t.events, EventKind::ActivityEnd, opener);
  const auto closed = indices(t.events, EventKind::ActivityStart, closer);
  std::size_t checked = 0;
  for (const auto& s : spans) {
    if (s.position != position) continue;
    ++checked;
    const auto o = std::find_if(opened.rbegin(), opened.rend(), [&](std::size_t i) { return i < s.start; });
    if (o == opened.rend()) return {"between", false, position + " ran before " + opener};
    const auto c = std::find_if(closed.begin(), closed.end(), [&](std::size_t i) { return i > *o; });
    if (c != closed.end() && *c < s.end) return {"between", false, position + " ran after " + closer + " started"};
  }
  return {"between", true, std::to_string(checked) + " occurrences inside the window"};
}

AssertionResult check_context(const json& a, const TraceView& t) {
  for (const auto& [name, expected] : a.at("values").items()) {
    const auto it = t.final_context.find(name);
    if (it == t.final_context.end()) return {"context", false, "no variable " + name};
    if (it->second != expected.get<Value>()) {
      return {"context", false, name + " = " + it->second.to_literal() + ", expected " + expected.dump()};
    }
  }
  return {"context", true, "final values match"};
}

AssertionResult check_expr(const json& a, const TraceView& t) {
  const auto source = a.at("expr").get<std::string>();
  try {
    const Value v = parse_expression(source).eval(t.final_context);
    if (!v.is_boolean()) return {"expr", false, source + " is not boolean"};
    return {"expr", v.as_boolean(), source};
  } catch (const Error& e) {
    return {"expr", false, source + ": " + e.what()};
  }
}

}  // namespace

AssertionResult evaluate_assertion(const json& a, const TraceView& t) {
  const auto kind = a.at("kind").get<std::string>();
  std::string detail;

  if (kind == "lifecycle") {
    const auto want = a.at("equals").get<std::string>();
    return {kind, want == to_string(t.lifecycle), std::string("lifecycle ") + to_string(t.lifecycle)};
  }
  if (kind == "terminal") {
    const auto want = event_kind_from(a.at("equals").get<std::string>());
    const bool ok = !t.events.empty() && t.events.back().kind == want;
    return {kind, ok, t.events.empty() ? "empty trace" : "last event " + std::string(to_string(t.events.back().kind))};
  }
  if (kind == "order") return check_order(a, t);
  if (kind == "sequence") return check_sequence(a, t);
  if (kind == "count") {
    const auto position = a.at("position").get<std::string>();
    const bool ok = compare_count(a, started(t.events, position), detail);
    return {kind, ok, position + " " + detail};
  }
  if (kind == "absent" || kind == "present") {
    for (const auto& p : strings(a.at("positions"))) {
      const bool ran = started(t.events, p) > 0;
      if (ran != (kind == "present")) return {kind, false, p + (ran ? " ran" : " did not run")};
    }
    return {kind, true, join_list(strings(a.at("positions")))};
  }
  if (kind == "exactly_one_of") {
    std::vector<std::string> ran;
    for (const auto& p : strings(a.at("positions"))) {
      if (started(t.events, p) > 0) ran.push_back(p);
    }
    return {kind, ran.size() == 1, "ran [" + join_list(ran) + "]"};
  }
  if (kind == "same_presence") {
    const auto ps = strings(a.at("positions"));
    std::set<bool> seen;
    for (const auto& p : ps) seen.insert(started(t.events, p) > 0);
    return {kind, seen.size() <= 1, join_list(ps)};
  }
  if (kind == "forks") {
    std::size_t n = 0;
    for (const auto& e : t.events) n += is_kind(e, EventKind::BranchFork) ? 1 : 0;
    const bool ok = compare_count(a, n, detail);
    return {kind, ok, "forks " + detail};
  }
  if (kind == "forks_equal_context") {
    std::size_t n = 0;
    for (const auto& e : t.events) n += is_kind(e, EventKind::BranchFork) ? 1 : 0;
    const auto name = a.at("variable").get<std::string>();
    const auto it = t.final_context.find(name);
    const bool ok = it != t.final_context.end() && it->second.is_integer() &&
                    it->second.as_integer() == static_cast<std::int64_t>(n);
    return {kind, ok, std::to_string(n) + " forks vs " + name};
  }
  if (kind == "forks_equal_decisions") {
    // Forks equal the decisions that asked for another instance: the initial
    // value plus every later context change of the variable to true.
    const auto name = a.at("variable").get<std::string>();
    std::size_t forks = 0, decisions = 0;
    const auto init = t.initial_context.find(name);
    if (init != t.initial_context.end() && init->second == Value(true)) ++decisions;
    for (const auto& e : t.events) {
      forks += is_kind(e, EventKind::BranchFork) ? 1 : 0;
      if (e.kind == EventKind::ContextChange && e.detail.value("name", "") == name && e.detail.at("new") == json(true)) {
        ++decisions;
      }
    }
    return {kind, forks == decisions, std::to_string(forks) + " forks vs " + std::to_string(decisions) + " decisions"};
  }
  if (kind == "join_all") return check_join_all(t);
  if (kind == "partial_join") return check_partial_join(a, t);
  if (kind == "critical_exclusive") {
    const auto v = critical_violation(t.events, a.value("section", ""));
    std::size_t entered = 0;
    for (const auto& e : t.events) entered += is_kind(e, EventKind::CriticalEnter) ? 1 : 0;
    if (entered == 0) return {kind, false, "no critical section entered"};
    return {kind, !v, v.value_or(std::to_string(entered) + " entries")};
  }
  if (kind == "activity_spans_disjoint") return check_activity_spans(a, t);
  if (kind == "branch_spans_disjoint") return check_branch_spans(t);
  if (kind == "between") return check_between(a, t);
  if (kind == "context") return check_context(a, t);
  if (kind == "expr") return check_expr(a, t);
  if (kind == "signal") {
    const auto name = a.at("signal").get<std::string>();
    std::size_t n = 0;
    for (const auto& e : t.events) n += is_signal(e, name) ? 1 : 0;
    const bool ok = compare_count(a, n, detail);
    return {kind, ok, name + " " + detail};
  }
  if (kind == "interrupted") {
    std::size_t n = 0;
    for (const auto& e : t.events) {
      n += e.kind == EventKind::ActivityEnd && e.detail.value("interrupted", false) ? 1 : 0;
    }
    const bool ok = compare_count(a, n, detail);
    return {kind, ok, "interrupted " + detail};
  }
  if (kind == "observation") {
    const auto name = a.at("name").get<std::string>();
    if (!t.observations.contains(name)) return {kind, false, "no observation " + name};
    const bool ok = compare_count(a, t.observations.at(name).get<std::size_t>(), detail);
    return {kind, ok, name + " " + detail};
  }
  throw Error("unknown assertion kind '" + kind + "'");
}

std::vector<std::string> check_trace_invariants(const std::vector<EventRecord>& ev) {
  std::vector<std::string> out;
  if (ev.empty()) return {"empty trace"};

  for (std::size_t i = 1; i < ev.size(); ++i) {
    if (ev[i].seq != ev[i - 1].seq + 1) {
      out.push_back("sequence gap after " + std::to_string(ev[i - 1].seq));
      break;
    }
  }

  // Segments: one per instance_start (the original run and each resume).
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (ev[i].kind == EventKind::InstanceStart) segments.push_back({i, ev.size()});
  }
  if (segments.empty() || segments.front().first != 0) out.push_back("trace does not begin with instance_start");
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) segments[s].second = segments[s + 1].first;

  bool final_finished = false;
  for (const auto& [b, e] : segments) {
    std::size_t terminals = 0;
    bool acknowledged = false, stop_signal = false;
    std::map<std::string, std::string> open;
    for (std::size_t i = b; i < e; ++i) {
      const auto& x = ev[i];
      if (x.kind == EventKind::InstanceFinish || x.kind == EventKind::InstanceStop) {
        ++terminals;
        if (i + 1 != e) out.push_back("terminal record is not last in its segment");
      }
      if (x.kind == EventKind::StopAcknowledged) acknowledged = true;
      if (is_signal(x, "stop")) stop_signal = true;
      if (x.kind == EventKind::ActivityStart && x.position) {
        if (acknowledged) out.push_back("activity " + x.position->value + " started after stop");
        if (open.count(x.branch)) out.push_back("branch " + x.branch + " started two activities at once");
        open[x.branch] = x.position->value;
      }
      if (x.kind == EventKind::ActivityEnd && x.position) {
        const auto it = open.find(x.branch);
        if (it == open.end() || it->second != x.position->value) {
          out.push_back("unmatched end of " + x.position->value + " in branch " + x.branch);
        } else {
          open.erase(it);
        }
      }
    }
    if (terminals != 1) out.push_back("segment has " + std::to_string(terminals) + " terminal records");
    const auto last = ev[e - 1].kind;
    if (last == EventKind::InstanceFinish && stop_signal) out.push_back("finished instance received a stop");
    if (last == EventKind::InstanceStop && !acknowledged) out.push_back("stopped without acknowledgement");
    final_finished = last == EventKind::InstanceFinish;
  }

  if (const auto v = critical_violation(ev, "")) out.push_back(*v);

  if (final_finished) {
    std::set<std::string> ended, dismissed;
    for (const auto& x : ev) {
      if (x.kind == EventKind::BranchEnd) ended.insert(x.branch);
      if (is_signal(x, "no_longer_necessary")) dismissed.insert(x.branch);
    }
    for (const auto& x : ev) {
      if (x.kind != EventKind::BranchFork) continue;
      const auto child = x.detail.value("child", "");
      if (ended.count(child)) continue;
      const bool covered = std::any_of(dismissed.begin(), dismissed.end(),
                                       [&](const std::string& d) { return within(child, d); });
      if (!covered) out.push_back("branch " + child + " never ended");
    }
  }
  return out;
}

Values replay_context(const Values& initial, const std::vector<EventRecord>& events) {
  Values v = initial;
  for (const auto& e : events) {
    if (e.kind != EventKind::ContextChange) continue;
    v[e.detail.at("name").get<std::string>()] = e.detail.at("new").get<Value>();
  }
  return v;
}

}  // namespace wee::harness
