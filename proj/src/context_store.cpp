#include "wee/context_store.hpp"

#include <mutex>

#include "wee/errors.hpp"

namespace wee {

ContextStore::ContextStore(const std::vector<ContextDecl>& decls, const Values& overrides) {
  for (const auto& decl : decls) {
    if (values_.count(decl.name) != 0) throw Error("duplicate context variable '" + decl.name + "'");
    const auto o = overrides.find(decl.name);
    values_.emplace(decl.name, o != overrides.end() ? o->second : decl.initializer.eval(values_));
  }
  baseline_ = values_;
}

ContextStore::ContextStore(Values baseline, std::uint64_t version)
    : baseline_(baseline), baseline_version_(version), values_(std::move(baseline)) {}

ContextSnapshot ContextStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return ContextSnapshot{values_, baseline_version_ + log_.size()};
}

std::uint64_t ContextStore::version() const {
  std::shared_lock lock(mutex_);
  return baseline_version_ + log_.size();
}

std::uint64_t ContextStore::commit(const Delta& delta, const PositionId& position) {
  std::unique_lock lock(mutex_);
  commit_locked(delta, position);
  return baseline_version_ + log_.size();
}

std::vector<ChangeRecord> ContextStore::update(const PositionId& position,
                                               const std::function<Delta(const Values&)>& compute,
                                               const std::function<void(const std::vector<ChangeRecord>&)>& on_commit) {
  std::unique_lock lock(mutex_);
  const Delta delta = compute(values_);
  auto records = commit_locked(delta, position);
  if (on_commit) on_commit(records);
  return records;
}

std::vector<ChangeRecord> ContextStore::commit_locked(const Delta& delta, const PositionId& position) {
  for (const auto& change : delta) {
    if (values_.count(change.name) == 0) throw Error("commit to undeclared variable '" + change.name + "'");
  }
  std::vector<ChangeRecord> records;
  records.reserve(delta.size());
  for (const auto& change : delta) {
    ChangeRecord rec{baseline_version_ + log_.size() + 1, position, change.name, values_.at(change.name),
                     change.new_value};
    values_[change.name] = change.new_value;
    log_.push_back(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ChangeRecord> ContextStore::change_log() const {
  std::shared_lock lock(mutex_);
  return log_;
}

Values ContextStore::baseline() const {
  std::shared_lock lock(mutex_);
  return baseline_;
}

std::uint64_t ContextStore::baseline_version() const {
  std::shared_lock lock(mutex_);
  return baseline_version_;
}

Values ContextStore::replay(const Values& initial, const std::vector<ChangeRecord>& log) {
  Values out = initial;
  for (const auto& rec : log) out[rec.name] = rec.new_value;
  return out;
}

}  // namespace wee
