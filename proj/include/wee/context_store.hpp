#pragma once

#include <cstdint>
#include <functional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "wee/ast.hpp"
#include "wee/expression.hpp"
#include "wee/value.hpp"

namespace wee {

struct ChangeRecord {
  std::uint64_t seq = 0;
  PositionId position;
  std::string name;
  Value old_value;
  Value new_value;

  friend bool operator==(const ChangeRecord&, const ChangeRecord&) = default;
};

struct ContextSnapshot {
  Values values;
  std::uint64_t version = 0;

  friend bool operator==(const ContextSnapshot&, const ContextSnapshot&) = default;
};

/// Context variables shared by every branch of one instance. Each committed
/// change is recorded with a gap-free sequence number. Commits are mutually
/// exclusive; snapshots never observe part of a delta.
class ContextStore {
 public:
  /// Evaluates initializers in declaration order; each may read only the
  /// variables declared before it. Names present in `overrides` take the
  /// override value instead. Throws Error on duplicate names and EvalError on
  /// unbound references.
  explicit ContextStore(const std::vector<ContextDecl>& decls, const Values& overrides = {});

  /// Restores a store whose history before `version` is not retained.
  ContextStore(Values baseline, std::uint64_t version);

  ContextStore(const ContextStore&) = delete;
  ContextStore& operator=(const ContextStore&) = delete;

  ContextSnapshot snapshot() const;
  std::uint64_t version() const;

  /// Appends the delta to the log with consecutive sequence numbers and
  /// returns the new version. An empty delta leaves the version unchanged.
  std::uint64_t commit(const Delta& delta, const PositionId& position);

  /// Atomic read-modify-write: `compute` runs against the current values
  /// under the exclusive lock, and its delta is committed before the lock is
  /// released. `on_commit` also runs under the lock, so observers see
  /// records in sequence order. If `compute` throws nothing is committed.
  std::vector<ChangeRecord> update(const PositionId& position,
                                   const std::function<Delta(const Values&)>& compute,
                                   const std::function<void(const std::vector<ChangeRecord>&)>& on_commit = {});

  std::vector<ChangeRecord> change_log() const;
  /// Values the change log starts from.
  Values baseline() const;
  std::uint64_t baseline_version() const;

  /// Folds `log` over `initial`; the reference for the replay invariant.
  static Values replay(const Values& initial, const std::vector<ChangeRecord>& log);

 private:
  std::vector<ChangeRecord> commit_locked(const Delta& delta, const PositionId& position);

  mutable std::shared_mutex mutex_;
  Values baseline_;
  std::uint64_t baseline_version_ = 0;
  Values values_;
  std::vector<ChangeRecord> log_;
};

}  // namespace wee
