#include <string>
#include <vector>

#include "wee/errors.hpp"
#include "wee/harness.hpp"

namespace wee::harness {

const char* to_string(SupportLevel level) noexcept {
  switch (level) {
    case SupportLevel::Direct: return "direct";
    case SupportLevel::Modified: return "modified";
    case SupportLevel::HandlerExternal: return "handler_external";
    case SupportLevel::Orchestrated: return "orchestrated";
  }
  return "?";
}

SupportLevel support_level_from(std::string_view name) {
  if (name == "direct") return SupportLevel::Direct;
  if (name == "modified") return SupportLevel::Modified;
  if (name == "handler_external") return SupportLevel::HandlerExternal;
  if (name == "orchestrated") return SupportLevel::Orchestrated;
  throw Error("unknown support level '" + std::string(name) + "'");
}

const char* aggregate_symbol(SupportLevel level) noexcept {
  switch (level) {
    case SupportLevel::Direct: return "+";
    case SupportLevel::Modified:
    case SupportLevel::HandlerExternal: return "+/-";
    case SupportLevel::Orchestrated: return "-";
  }
  return "?";
}

const std::vector<ReferenceEntry>& reference_table() {
  using L = SupportLevel;
  static const std::string basic = "Basic Control Flow";
  static const std::string adv = "Advanced Branching and Synchronization";
  static const std::string mi = "Multiple Instances";
  static const std::string state = "State Based";
  static const std::string cancel = "Cancellation and Force Completion";
  static const std::string iter = "Iteration";
  static const std::string term = "Termination";
  static const std::string trig = "Trigger";
  static const std::vector<ReferenceEntry> table{
      {basic, "Sequence", L::Direct},
      {basic, "Parallel Split", L::Direct},
      {basic, "Synchronization", L::Direct},
      {basic, "Exclusive Choice", L::Direct},
      {basic, "Simple Merge", L::Direct},
      {adv, "Multi-Choice", L::Direct},
      {adv, "Structured Synchronizing Merge", L::Direct},
      {adv, "Multi-Merge", L::Orchestrated},
      {adv, "Structured Discriminator", L::Orchestrated},
      {adv, "Blocking Discriminator", L::Orchestrated},
      {adv, "Cancelling Discriminator", L::Direct},
      {adv, "Structured Partial Join", L::Orchestrated},
      {adv, "Blocking Partial Join", L::Orchestrated},
      {adv, "Cancelling Partial Join", L::Direct},
      {adv, "Generalised AND-Join", L::Orchestrated},
      {adv, "Local Synchronizing Merge", L::Orchestrated},
      {adv, "General Synchronizing Merge", L::Orchestrated},
      {adv, "Thread Merge", L::Direct},
      {adv, "Thread Split", L::Direct},
      {mi, "Multiple Instances without Synchronization", L::HandlerExternal},
      {mi, "Multiple Instances with a Priori Design-Time Knowledge", L::Direct},
      {mi, "Multiple Instances with a Priori Run-Time Knowledge", L::Direct},
      {mi, "Multiple Instances without a Priori Run-Time Knowledge", L::Direct},
      {mi, "Static Partial Join for Multiple Instances", L::Orchestrated},
      {mi, "Cancelling Partial Join for Multiple Instances", L::Direct},
      {mi, "Dynamic Partial Join for Multiple Instances", L::Orchestrated},
      {state, "Deferred Choice", L::Modified},
      {state, "Interleaved Parallel Routing", L::Direct},
      {state, "Milestone", L::Modified},
      {state, "Critical Section", L::Direct},
      {state, "Interleaved Routing", L::Direct},
      {cancel, "Cancel Task", L::Direct},
      {cancel, "Cancel Case", L::Direct},
      {cancel, "Cancel Region", L::HandlerExternal},
      {cancel, "Cancel Multiple Instance Activity", L::Direct},
      {cancel, "Complete Multiple Instance Activity", L::Orchestrated},
      {iter, "Arbitrary Cycles", L::HandlerExternal},
      {iter, "Structured Loop", L::Direct},
      {iter, "Recursion", L::HandlerExternal},
      {term, "Implicit Termination", L::Direct},
      {term, "Explicit Termination", L::Direct},
      {trig, "Transient Trigger", L::HandlerExternal},
      {trig, "Persistent Trigger", L::HandlerExternal},
  };
  return table;
}

const ReferenceEntry* find_reference(std::string_view name) {
  for (const auto& e : reference_table()) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

EngineSummary published_summary() { return {"WEE", 22, 10, 11}; }

const std::vector<EngineSummary>& third_party_summaries() {
  static const std::vector<EngineSummary> rows{
      {"StaffWare 10", 14, 0, 29},      {"WebSphere MQ 3.4", 11, 0, 32}, {"Oracle BPEL PM 10.12", 18, 6, 19},
      {"JBoss jBPM 3.1.4.2", 13, 2, 28}, {"OpenWFE 1.7.3", 20, 4, 19},    {"Enhydra Shark 2.0", 11, 0, 32},
  };
  return rows;
}

}  // namespace wee::harness
