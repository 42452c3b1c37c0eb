#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "wee/ast.hpp"
#include "wee/context_store.hpp"
#include "wee/events.hpp"
#include "wee/handler.hpp"

namespace wee {

enum class Lifecycle { Ready, Running, Stopped, Finished };

const char* to_string(Lifecycle lifecycle) noexcept;
Lifecycle lifecycle_from(const std::string& name);

enum class BranchStatus { Active, WaitingJoin, InCritical, Completed, Cancelled, Stopped, Failed };

const char* to_string(BranchStatus status) noexcept;

/// Serializable join bookkeeping of a parallel block a branch is executing.
struct SavedJoin {
  NodePath parallel;
  std::size_t arrived = 0;
  std::size_t spawned = 0;
  bool fired = false;
};

/// Program counter and open joins of one branch at the moment it stopped.
/// `path` is the flat encoding [i0, s0, (mask0), i1, ...] where a choose level
/// carries the bit mask of alternatives selected at entry.
struct SavedBranch {
  std::string id;
  std::optional<std::string> parent;
  std::vector<std::size_t> path;
  std::vector<SavedJoin> joins;
  std::uint64_t forks = 0;
  std::optional<std::pair<PositionId, std::string>> passthrough;
};

/// Everything needed to continue a stopped instance.
struct InstanceState {
  Lifecycle lifecycle = Lifecycle::Ready;
  std::string instance_id;
  std::vector<SavedBranch> branches;
  Values context;
  std::uint64_t version = 0;
  std::map<PositionId, std::string> passthroughs;
  std::uint64_t next_seq = 1;
};

struct EngineOptions {
  std::string instance_id = "instance";
  std::uint64_t max_iterations = 1'000'000;
  WallClock clock = system_wall_clock();
  /// Initial values overriding context declarations (used by nested instances).
  Values context_overrides;
};

struct ResumeOptions {
  /// Move a branch's program counter to the given activity before resuming.
  std::map<std::string, PositionId> overrides;
  /// Activities that are not executed after resume (cancel region).
  std::set<PositionId> skip;
};

struct BranchInfo {
  std::string id;
  BranchStatus status;
};

struct RunResult {
  Lifecycle lifecycle = Lifecycle::Ready;
  std::optional<std::string> error;

  int exit_code() const;
};

/// A jump from the activity at `from` to the activity at `to` is legal iff it
/// neither leaves nor enters a parallel or parallel_branch node.
bool jump_is_legal(const WorkflowAst& ast, const NodePath& from, const NodePath& to);

/// One executing workflow instance. Each branch of the workflow runs on its
/// own thread; all branches share the context store, the critical-section
/// registry and the event log.
class Instance {
 public:
  Instance(std::shared_ptr<const WorkflowAst> ast, HandlerWrapper& handler, EngineOptions options = {});
  /// Restores a stopped instance. Throws RuntimeError on a corrupt state or
  /// an override naming an unknown or unreachable position.
  Instance(std::shared_ptr<const WorkflowAst> ast, HandlerWrapper& handler, const InstanceState& saved,
           ResumeOptions resume, EngineOptions options = {});
  ~Instance();

  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;

  /// Sinks and observers must be attached before start().
  EventLog& log() noexcept { return *log_; }
  const ContextStore& store() const noexcept { return *store_; }

  void start();
  RunResult wait();
  RunResult run() {
    start();
    return wait();
  }

  /// Stop signal from the controller. Idempotent; returns false if the
  /// instance was not running or a stop was already delivered.
  bool stop();
  /// Sends stop_call to every in-flight call at `position`; no-op if none.
  void stop_call(const PositionId& position);

  Lifecycle lifecycle() const;
  std::vector<BranchInfo> branches() const;
  /// Valid once the instance has stopped.
  InstanceState save() const;

  struct Branch;
  struct Join;

 private:
  struct Halt {};
  struct JumpTo {
    NodePath target;
    std::size_t level;
  };
  struct InFlight {
    std::shared_ptr<Branch> branch;
    PositionId position;
    std::stop_source source;
  };

  void start_thread(const std::shared_ptr<Branch>& branch);
  void run_root(const std::shared_ptr<Branch>& branch);
  void run_child(const std::shared_ptr<Branch>& branch);

  void exec_block(Branch& b, const Block& block, std::size_t level, std::span<const std::size_t> entry);
  void exec_node(Branch& b, const Node& node, std::size_t level, std::span<const std::size_t> rest);
  void exec_manipulate(Branch& b, const ManipulateActivity& m);
  void exec_call(Branch& b, const CallActivity& c, std::size_t level);
  void exec_parallel(Branch& b, const Parallel& p, std::size_t level, std::span<const std::size_t> rest);
  void exec_fork(Branch& b, std::size_t level);
  void exec_choose(Branch& b, const Choose& c, std::size_t level, std::span<const std::size_t> rest);
  void exec_cycle(Branch& b, const Cycle& c, std::size_t level, std::span<const std::size_t> rest);
  void exec_critical(Branch& b, const Critical& c, std::size_t level, std::span<const std::size_t> rest);

  void checkpoint(const Branch& b) const;
  bool halted(const Branch& b) const;
  void begin_activity(Branch& b, const PositionId& position);
  void deliver_stop(const std::string& source);
  void fail(Branch& b, const std::string& message, const PositionId* position);
  void cancel_locked(Branch& b, const std::string& joiner);
  void arrive(Branch& child);
  void fire_locked(Join& join, const std::string& joiner);
  void wait_children(Join& join);
  void check_jump(const Branch& b, const NodePath& from, const NodePath& to) const;
  void finish_run(const std::shared_ptr<Branch>& root);

  std::vector<std::size_t> encode_pc(const Branch& b) const;
  NodePath node_path(std::span<const std::size_t> pc) const;
  std::vector<std::size_t> entry_for(const NodePath& target, std::size_t from_level) const;

  std::shared_ptr<const WorkflowAst> ast_;
  HandlerWrapper& handler_;
  EngineOptions options_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<ContextStore> store_;
  ResumeOptions resume_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  Lifecycle lifecycle_ = Lifecycle::Ready;
  std::atomic<bool> stop_requested_{false};
  std::optional<std::string> error_;
  std::string stop_source_;
  std::shared_ptr<Branch> root_;
  std::vector<std::shared_ptr<Branch>> all_branches_;
  std::map<std::uint64_t, InFlight> in_flight_;
  std::uint64_t next_call_id_ = 0;
  std::map<PositionId, std::string> passthroughs_;
  bool resumed_ = false;
  std::vector<std::shared_ptr<Branch>> restored_children_;

  // Critical sections: section name -> owning branch id.
  std::mutex critical_mutex_;
  std::condition_variable critical_cv_;
  std::map<std::string, std::string> critical_owner_;

  friend class CriticalGuard;
};

}  // namespace wee
