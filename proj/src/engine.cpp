#include "wee/engine.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "wee/errors.hpp"

namespace wee {

namespace {

struct Frame {
  std::size_t index = 0;
  std::size_t selector = 0;
  std::uint64_t mask = 0;  // alternatives selected at choose entry
};

bool is_parallel_node(const Node& node) {
  return std::holds_alternative<Parallel>(node.kind) || std::holds_alternative<ParallelBranch>(node.kind);
}

std::string wait_label(const WaitSpec& w) { return w.all ? std::string("all") : std::to_string(w.count); }

// Decoded flat program counter.
struct DecodedPc {
  std::vector<Frame> frames;
  std::vector<std::size_t> offsets;  // offset of each level's index in the flat encoding
  std::size_t branch_level = 0;      // level of the deepest parallel_branch body (0 = root)
  std::optional<NodePath> parallel;  // parallel node owning that parallel_branch
};

DecodedPc decode_pc(const WorkflowAst& ast, std::span<const std::size_t> pc) {
  if (pc.empty()) throw RuntimeError("corrupt saved state: empty program counter");
  DecodedPc out;
  const Block* block = &ast.body;
  NodePath walked;
  std::size_t k = 0;
  while (true) {
    out.offsets.push_back(k);
    const std::size_t index = pc[k++];
    if (index > block->size()) throw RuntimeError("corrupt saved state: program counter out of range");
    Frame f{index, 0, 0};
    if (k == pc.size()) {
      out.frames.push_back(f);
      return out;
    }
    if (index == block->size()) throw RuntimeError("corrupt saved state: descent past end of block");
    const Node& node = (*block)[index];
    f.selector = pc[k++];
    if (f.selector >= child_block_count(node)) throw RuntimeError("corrupt saved state: bad block selector");
    if (std::holds_alternative<Choose>(node.kind)) {
      if (k == pc.size()) throw RuntimeError("corrupt saved state: missing choose mask");
      f.mask = pc[k++];
    }
    walked.push_back(index);
    if (std::holds_alternative<ParallelBranch>(node.kind)) {
      out.branch_level = out.frames.size() + 1;
      // Owning parallel: nearest enclosing Parallel node already walked.
      NodePath probe = walked;
      std::optional<NodePath> owner;
      for (std::size_t lvl = out.frames.size(); lvl-- > 0;) {
        probe.resize(2 * lvl + 1);
        if (std::holds_alternative<Parallel>(ast.node_at(probe).kind)) {
          owner = probe;
          break;
        }
      }
      if (!owner) throw RuntimeError("corrupt saved state: parallel_branch without parallel");
      out.parallel = owner;
    }
    walked.push_back(f.selector);
    out.frames.push_back(f);
    if (k == pc.size()) throw RuntimeError("corrupt saved state: truncated program counter");
    block = &child_block(node, f.selector);
  }
}

}  // namespace

const char* to_string(Lifecycle lifecycle) noexcept {
  switch (lifecycle) {
    case Lifecycle::Ready: return "ready";
    case Lifecycle::Running: return "running";
    case Lifecycle::Stopped: return "stopped";
    case Lifecycle::Finished: return "finished";
  }
  return "?";
}

Lifecycle lifecycle_from(const std::string& name) {
  for (auto l : {Lifecycle::Ready, Lifecycle::Running, Lifecycle::Stopped, Lifecycle::Finished}) {
    if (name == to_string(l)) return l;
  }
  throw Error("unknown lifecycle '" + name + "'");
}

const char* to_string(BranchStatus status) noexcept {
  switch (status) {
    case BranchStatus::Active: return "active";
    case BranchStatus::WaitingJoin: return "waiting_join";
    case BranchStatus::InCritical: return "in_critical";
    case BranchStatus::Completed: return "completed";
    case BranchStatus::Cancelled: return "cancelled";
    case BranchStatus::Stopped: return "stopped";
    case BranchStatus::Failed: return "failed";
  }
  return "?";
}

int RunResult::exit_code() const {
  if (error) return 1;
  switch (lifecycle) {
    case Lifecycle::Finished: return 0;
    case Lifecycle::Stopped: return 2;
    default: return 1;
  }
}

struct Instance::Join {
  WaitSpec wait;
  NodePath parallel;
  std::size_t arrived = 0;
  std::size_t spawned = 0;
  bool fired = false;
  std::vector<std::shared_ptr<Branch>> children;
};

struct Instance::Branch {
  std::string id;
  Branch* parent = nullptr;
  std::shared_ptr<Join> join;  // the join this branch reports to; null for the root
  const Block* base_block = nullptr;
  std::size_t base_level = 0;
  std::vector<Frame> frames;
  std::vector<std::size_t> resume_entry;  // flat pc from base_level, consumed on start

  std::atomic<bool> cancelled{false};
  std::atomic<BranchStatus> status{BranchStatus::Active};
  std::uint64_t forks = 0;
  std::vector<std::shared_ptr<Join>> open_joins;
  std::map<NodePath, std::shared_ptr<Join>> restored_joins;
  std::optional<std::pair<PositionId, std::string>> pending_passthrough;
  std::optional<std::pair<PositionId, std::string>> passthrough;
  std::set<std::string> held_sections;
  std::thread thread;
};

/// Holds a named critical section for the lifetime of the guard. Waiting
/// aborts with Halt when the branch is stopped or cancelled.
class CriticalGuard {
 public:
  CriticalGuard(Instance& inst, Instance::Branch& b, const std::string& section)
      : inst_(inst), b_(b), section_(section) {
    std::unique_lock lk(inst_.critical_mutex_);
    inst_.critical_cv_.wait(lk, [&] { return inst_.critical_owner_.count(section_) == 0 || inst_.halted(b_); });
    if (inst_.halted(b_)) throw Instance::Halt{};
    inst_.critical_owner_[section_] = b_.id;
    b_.held_sections.insert(section_);
    inst_.log_->emit(b_.id, nullptr, EventKind::CriticalEnter, {{"section", section_}});
  }

  ~CriticalGuard() {
    std::unique_lock lk(inst_.critical_mutex_);
    inst_.log_->emit(b_.id, nullptr, EventKind::CriticalExit, {{"section", section_}});
    inst_.critical_owner_.erase(section_);
    b_.held_sections.erase(section_);
    inst_.critical_cv_.notify_all();
  }

  CriticalGuard(const CriticalGuard&) = delete;
  CriticalGuard& operator=(const CriticalGuard&) = delete;

 private:
  Instance& inst_;
  Instance::Branch& b_;
  std::string section_;
};

Instance::Instance(std::shared_ptr<const WorkflowAst> ast, HandlerWrapper& handler, EngineOptions options)
    : ast_(std::move(ast)), handler_(handler), options_(std::move(options)) {
  log_ = std::make_unique<EventLog>(options_.instance_id, 1, options_.clock);
  store_ = std::make_unique<ContextStore>(ast_->context, options_.context_overrides);
  root_ = std::make_shared<Branch>();
  root_->id = "0";
  root_->base_block = &ast_->body;
  all_branches_.push_back(root_);
}

Instance::Instance(std::shared_ptr<const WorkflowAst> ast, HandlerWrapper& handler, const InstanceState& saved,
                   ResumeOptions resume, EngineOptions options)
    : ast_(std::move(ast)), handler_(handler), options_(std::move(options)), resume_(std::move(resume)) {
  if (saved.lifecycle != Lifecycle::Stopped) {
    throw RuntimeError(std::string("cannot resume an instance in state '") + to_string(saved.lifecycle) + "'");
  }
  if (!saved.instance_id.empty()) options_.instance_id = saved.instance_id;
  log_ = std::make_unique<EventLog>(options_.instance_id, saved.next_seq, options_.clock);
  store_ = std::make_unique<ContextStore>(saved.context, saved.version);
  passthroughs_ = saved.passthroughs;
  resumed_ = true;

  std::map<std::string, std::shared_ptr<Branch>> by_id;
  std::map<std::string, DecodedPc> decoded;
  for (const auto& sb : saved.branches) {
    if (by_id.count(sb.id) != 0) throw RuntimeError("corrupt saved state: duplicate branch '" + sb.id + "'");
    auto b = std::make_shared<Branch>();
    b->id = sb.id;
    b->forks = sb.forks;
    b->pending_passthrough = sb.passthrough;
    DecodedPc pc = decode_pc(*ast_, sb.path);
    b->frames = pc.frames;

    if (const auto ov = resume_.overrides.find(sb.id); ov != resume_.overrides.end()) {
      const NodePath* target = ast_->path_of(ov->second);
      if (!target) throw RuntimeError("override position '" + ov->second.value + "' is not in the workflow");
      NodePath from;
      for (std::size_t l = 0; l < b->frames.size(); ++l) {
        from.push_back(b->frames[l].index);
        if (l + 1 < b->frames.size()) from.push_back(b->frames[l].selector);
      }
      b->base_level = pc.branch_level;
      check_jump(*b, from, *target);
      std::size_t common = 0;
      while (2 * common + 2 < target->size() && 2 * common + 1 < from.size() &&
             from[2 * common] == (*target)[2 * common] && from[2 * common + 1] == (*target)[2 * common + 1]) {
        ++common;
      }
      b->frames.resize(common);
      const auto tail = entry_for(*target, common);
      const Block* block = &ast_->body;
      for (std::size_t l = 0; l < common; ++l) block = &child_block((*block)[b->frames[l].index], b->frames[l].selector);
      std::size_t k = 0;
      while (true) {
        Frame f{tail[k++], 0, 0};
        if (k == tail.size()) {
          b->frames.push_back(f);
          break;
        }
        const Node& n = (*block)[f.index];
        f.selector = tail[k++];
        if (std::holds_alternative<Choose>(n.kind)) f.mask = tail[k++];
        b->frames.push_back(f);
        block = &child_block(n, f.selector);
      }
      // Re-decode so that offsets match the new frames.
      std::vector<std::size_t> flat;
      block = &ast_->body;
      for (std::size_t l = 0; l < b->frames.size(); ++l) {
        flat.push_back(b->frames[l].index);
        if (l + 1 == b->frames.size()) break;
        const Node& n = (*block)[b->frames[l].index];
        flat.push_back(b->frames[l].selector);
        if (std::holds_alternative<Choose>(n.kind)) flat.push_back(b->frames[l].mask);
        block = &child_block(n, b->frames[l].selector);
      }
      pc = decode_pc(*ast_, flat);
    }

    b->base_level = pc.branch_level;
    b->resume_entry.assign(sb.path.begin(), sb.path.end());
    {
      std::vector<std::size_t> flat;
      const Block* block = &ast_->body;
      for (std::size_t l = 0; l < b->frames.size(); ++l) {
        flat.push_back(b->frames[l].index);
        if (l + 1 == b->frames.size()) break;
        const Node& n = (*block)[b->frames[l].index];
        flat.push_back(b->frames[l].selector);
        if (std::holds_alternative<Choose>(n.kind)) flat.push_back(b->frames[l].mask);
        block = &child_block(n, b->frames[l].selector);
      }
      b->resume_entry.assign(flat.begin() + static_cast<std::ptrdiff_t>(pc.offsets.at(b->base_level)), flat.end());
    }
    if (b->base_level == 0) {
      b->base_block = &ast_->body;
    } else {
      NodePath pb;
      for (std::size_t l = 0; l < b->base_level; ++l) {
        pb.push_back(b->frames[l].index);
        if (l + 1 < b->base_level) pb.push_back(b->frames[l].selector);
      }
      b->base_block = &std::get<ParallelBranch>(ast_->node_at(pb).kind).body;
    }
    b->frames.resize(b->base_level);

    for (const auto& sj : sb.joins) {
      const Node* pn = nullptr;
      try {
        pn = &ast_->node_at(sj.parallel);
      } catch (const Error&) {
        throw RuntimeError("corrupt saved state: join path does not name a node");
      }
      const auto* par = std::get_if<Parallel>(&pn->kind);
      if (!par) throw RuntimeError("corrupt saved state: join path does not name a parallel block");
      auto j = std::make_shared<Join>();
      j->wait = par->wait;
      j->parallel = sj.parallel;
      j->arrived = sj.arrived;
      j->spawned = sj.spawned;
      j->fired = sj.fired;
      b->restored_joins.emplace(sj.parallel, std::move(j));
    }
    decoded.emplace(sb.id, std::move(pc));
    by_id.emplace(sb.id, b);
  }

  for (const auto& sb : saved.branches) {
    auto& b = by_id.at(sb.id);
    if (!sb.parent) {
      if (root_) throw RuntimeError("corrupt saved state: more than one root branch");
      if (b->base_level != 0) throw RuntimeError("corrupt saved state: root branch inside parallel_branch");
      root_ = b;
      continue;
    }
    const auto p = by_id.find(*sb.parent);
    if (p == by_id.end()) throw RuntimeError("corrupt saved state: unknown parent '" + *sb.parent + "'");
    const auto& pc = decoded.at(sb.id);
    if (!pc.parallel) throw RuntimeError("corrupt saved state: child branch outside parallel_branch");
    const auto j = p->second->restored_joins.find(*pc.parallel);
    if (j == p->second->restored_joins.end()) {
      throw RuntimeError("corrupt saved state: parent '" + *sb.parent + "' has no matching join");
    }
    b->parent = p->second.get();
    b->join = j->second;
    j->second->children.push_back(b);
    restored_children_.push_back(b);
  }
  if (!root_) throw RuntimeError("corrupt saved state: no root branch");
  for (const auto& sb : saved.branches) all_branches_.push_back(by_id.at(sb.id));
}

Instance::~Instance() {
  if (root_ && root_->thread.joinable()) {
    deliver_stop("shutdown");
    root_->thread.join();
  }
}

void Instance::start() {
  std::lock_guard lk(mutex_);
  if (lifecycle_ != Lifecycle::Ready) throw RuntimeError("instance already started");
  lifecycle_ = Lifecycle::Running;
  log_->emit(root_->id, nullptr, EventKind::InstanceStart, {{"handler", handler_.name()}, {"resumed", resumed_}});
  for (const auto& child : restored_children_) start_thread(child);
  root_->thread = std::thread([this, root = root_] { run_root(root); });
}

RunResult Instance::wait() {
  if (root_->thread.joinable()) root_->thread.join();
  std::lock_guard lk(mutex_);
  return RunResult{lifecycle_, error_};
}

void Instance::start_thread(const std::shared_ptr<Branch>& branch) {
  branch->thread = std::thread([this, branch] { run_child(branch); });
}

void Instance::run_root(const std::shared_ptr<Branch>& b) {
  try {
    exec_block(*b, ast_->body, 0, b->resume_entry);
  } catch (const Halt&) {
  } catch (const JumpTo&) {
    fail(*b, "illegal jump", nullptr);
  } catch (const std::exception& e) {
    fail(*b, e.what(), nullptr);
  }
  finish_run(b);
}

void Instance::finish_run(const std::shared_ptr<Branch>& root) {
  {
    std::lock_guard lk(mutex_);
    if (stop_requested_) {
      lifecycle_ = Lifecycle::Stopped;
      if (root->status != BranchStatus::Failed) root->status = BranchStatus::Stopped;
      nlohmann::json detail{{"source", stop_source_}};
      if (error_) detail["error"] = *error_;
      log_->emit(root->id, nullptr, EventKind::InstanceStop, std::move(detail));
    } else {
      lifecycle_ = Lifecycle::Finished;
      root->status = BranchStatus::Completed;
      log_->emit(root->id, nullptr, EventKind::InstanceFinish,
                 {{"context", values_to_json(store_->snapshot().values)}});
    }
  }
  cv_.notify_all();
}

void Instance::run_child(const std::shared_ptr<Branch>& b) {
  try {
    exec_block(*b, *b->base_block, b->base_level, b->resume_entry);
    arrive(*b);
  } catch (const Halt&) {
    std::lock_guard lk(mutex_);
    if (b->status != BranchStatus::Failed) {
      b->status = b->cancelled ? BranchStatus::Cancelled : BranchStatus::Stopped;
    }
  } catch (const JumpTo&) {
    fail(*b, "illegal jump", nullptr);
  } catch (const std::exception& e) {
    fail(*b, e.what(), nullptr);
  }
  cv_.notify_all();
}

bool Instance::halted(const Branch& b) const { return stop_requested_ || b.cancelled; }

void Instance::checkpoint(const Branch& b) const {
  if (halted(b)) throw Halt{};
}

void Instance::exec_block(Branch& b, const Block& block, std::size_t level, std::span<const std::size_t> entry) {
  std::vector<std::size_t> jump_entry;
  std::size_t i = entry.empty() ? 0 : entry[0];
  std::span<const std::size_t> rest = entry.empty() ? std::span<const std::size_t>{} : entry.subspan(1);
  while (i < block.size()) {
    b.frames.resize(level + 1);
    b.frames[level] = Frame{i, 0, 0};
    try {
      checkpoint(b);
      exec_node(b, block[i], level, rest);
    } catch (const JumpTo& j) {
      if (j.level != level) throw;
      jump_entry = entry_for(j.target, level);
      i = jump_entry[0];
      rest = std::span<const std::size_t>(jump_entry).subspan(1);
      continue;
    } catch (const Error& e) {
      fail(b, e.what(), block[i].position());
      throw Halt{};
    }
    rest = {};
    ++i;
  }
  b.frames.resize(level + 1);
  b.frames[level] = Frame{block.size(), 0, 0};
}

void Instance::exec_node(Branch& b, const Node& node, std::size_t level, std::span<const std::size_t> rest) {
  if (const PositionId* pos = node.position(); pos && rest.empty() && resume_.skip.count(*pos) != 0) return;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, CallActivity>) {
          exec_call(b, n, level);
        } else if constexpr (std::is_same_v<T, ManipulateActivity>) {
          exec_manipulate(b, n);
        } else if constexpr (std::is_same_v<T, Parallel>) {
          exec_parallel(b, n, level, rest);
        } else if constexpr (std::is_same_v<T, ParallelBranch>) {
          exec_fork(b, level);
        } else if constexpr (std::is_same_v<T, Choose>) {
          exec_choose(b, n, level, rest);
        } else if constexpr (std::is_same_v<T, Cycle>) {
          exec_cycle(b, n, level, rest);
        } else {
          exec_critical(b, n, level, rest);
        }
      },
      node.kind);
}

void Instance::begin_activity(Branch& b, const PositionId& position) {
  std::lock_guard lk(mutex_);
  checkpoint(b);
  log_->emit(b.id, &position, EventKind::ActivityStart);
}

void Instance::exec_manipulate(Branch& b, const ManipulateActivity& m) {
  begin_activity(b, m.position);
  try {
    store_->update(
        m.position, [&](const Values& current) { return apply_assignments(m.statements, current); },
        [&](const std::vector<ChangeRecord>& records) {
          for (const auto& r : records) {
            log_->emit(b.id, &m.position, EventKind::ContextChange,
                       {{"seq", r.seq}, {"name", r.name}, {"old", r.old_value}, {"new", r.new_value}});
          }
        });
  } catch (const Error& e) {
    log_->emit(b.id, &m.position, EventKind::ActivityEnd, {{"outcome", "error"}, {"message", e.what()}});
    throw;
  }
  log_->emit(b.id, &m.position, EventKind::ActivityEnd, {{"outcome", "ok"}});
}

void Instance::exec_call(Branch& b, const CallActivity& c, std::size_t level) {
  const auto uri = ast_->endpoint_uri(c.endpoint);
  if (!uri) throw RuntimeError("undefined endpoint '" + c.endpoint + "'");

  std::optional<std::string> passthrough;
  if (b.pending_passthrough && b.pending_passthrough->first == c.position) {
    passthrough = b.pending_passthrough->second;
    b.pending_passthrough.reset();
  }

  bool started = false;
  while (true) {
    HandlerCall call;
    call.position = c.position;
    call.endpoint = *uri;
    call.context = store_->snapshot();
    call.passthrough = passthrough;
    call.instance = options_.instance_id;
    for (const auto& [name, expr] : c.parameters) call.parameters[name] = expr.eval(call.context.values);

    std::stop_source source;
    std::uint64_t call_id = 0;
    {
      std::lock_guard lk(mutex_);
      checkpoint(b);
      if (!started) {
        nlohmann::json detail{{"endpoint", *uri}};
        if (passthrough) detail["passthrough"] = *passthrough;
        log_->emit(b.id, &c.position, EventKind::ActivityStart, std::move(detail));
        started = true;
      }
      call_id = ++next_call_id_;
      in_flight_.emplace(call_id, InFlight{nullptr, c.position, source});
      for (const auto& br : all_branches_) {
        if (br.get() == &b) {
          in_flight_.at(call_id).branch = br;
          break;
        }
      }
    }

    HandlerOutcome outcome;
    try {
      outcome = handler_.call(call, source.get_token());
    } catch (const std::exception& e) {
      outcome = HandlerOutcome::error(e.what());
    }
    {
      std::lock_guard lk(mutex_);
      in_flight_.erase(call_id);
    }
    const bool interrupted = source.stop_requested();

    if (auto* r = std::get_if<HandlerOutcome::Result>(&outcome.value)) {
      if (halted(b)) {
        log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "discarded"}, {"interrupted", true}});
        throw Halt{};
      }
      try {
        store_->update(
            c.position,
            [&](const Values& current) {
              Delta delta;
              for (const auto& [name, value] : r->values) {
                const auto it = current.find(name);
                if (it == current.end()) {
                  throw RuntimeError("call '" + c.position.value + "' returned undeclared variable '" + name + "'");
                }
                delta.push_back(Change{name, it->second, value});
              }
              return delta;
            },
            [&](const std::vector<ChangeRecord>& records) {
              for (const auto& rec : records) {
                log_->emit(b.id, &c.position, EventKind::ContextChange,
                           {{"seq", rec.seq}, {"name", rec.name}, {"old", rec.old_value}, {"new", rec.new_value}});
              }
            });
      } catch (const Error& e) {
        log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "error"}, {"message", e.what()}});
        throw;
      }
      log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "ok"}});
      return;
    }

    if (auto* p = std::get_if<HandlerOutcome::Passthrough>(&outcome.value)) {
      if (!interrupted) {
        log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "error"}});
        throw RuntimeError("handler returned a passthrough for '" + c.position.value + "' without stop_call");
      }
      log_->emit(b.id, &c.position, EventKind::ActivityEnd,
                 {{"outcome", "passthrough"}, {"passthrough", p->token}, {"interrupted", true}});
      if (halted(b)) {
        std::lock_guard lk(mutex_);
        b.passthrough = std::make_pair(c.position, p->token);
        passthroughs_[c.position] = p->token;
        throw Halt{};
      }
      // stop_call without a stop: pick the stored result up right away.
      passthrough = p->token;
      started = false;
      continue;
    }

    if (auto* j = std::get_if<HandlerOutcome::Jump>(&outcome.value)) {
      log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "jump"}, {"target", j->target.value}});
      const NodePath* target = ast_->path_of(j->target);
      if (!target) throw RuntimeError("illegal jump: unknown position '" + j->target.value + "'");
      NodePath from;
      for (std::size_t l = 0; l < b.frames.size(); ++l) {
        from.push_back(b.frames[l].index);
        if (l + 1 < b.frames.size()) from.push_back(b.frames[l].selector);
      }
      check_jump(b, from, *target);
      std::size_t common = 0;
      while (2 * common + 2 < target->size() && 2 * common + 2 < from.size() + 0 &&
             from[2 * common] == (*target)[2 * common] && from[2 * common + 1] == (*target)[2 * common + 1]) {
        ++common;
      }
      log_->emit(b.id, &c.position, EventKind::Signal, {{"signal", "jump"}, {"target", j->target.value}});
      throw JumpTo{*target, common};
    }

    if (std::holds_alternative<HandlerOutcome::Stop>(outcome.value)) {
      log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "stop"}});
      b.frames[level].index += 1;  // resume continues after this activity
      deliver_stop("activity");
      throw Halt{};
    }

    const auto& err = std::get<HandlerOutcome::Error>(outcome.value);
    log_->emit(b.id, &c.position, EventKind::ActivityEnd, {{"outcome", "error"}, {"message", err.message}});
    throw RuntimeError("call '" + c.position.value + "' failed: " + err.message);
  }
}

void Instance::exec_parallel(Branch& b, const Parallel& p, std::size_t level, std::span<const std::size_t> rest) {
  NodePath ppath;
  for (std::size_t l = 0; l <= level; ++l) {
    ppath.push_back(b.frames[l].index);
    if (l < level) ppath.push_back(b.frames[l].selector);
  }
  std::shared_ptr<Join> join;
  if (!rest.empty()) {
    const auto it = b.restored_joins.find(ppath);
    if (it == b.restored_joins.end()) throw RuntimeError("corrupt saved state: missing join for parallel block");
    join = it->second;
    b.restored_joins.erase(it);
  } else {
    join = std::make_shared<Join>();
    join->wait = p.wait;
    join->parallel = ppath;
  }
  b.open_joins.push_back(join);
  b.frames[level].selector = 0;

  try {
    exec_block(b, p.body, level + 1, rest.empty() ? rest : rest.subspan(1));

    std::unique_lock lk(mutex_);
    if (!join->wait.all && !join->fired && join->spawned < static_cast<std::size_t>(join->wait.count)) {
      lk.unlock();
      fail(b, "unsatisfiable join: wait " + std::to_string(join->wait.count) + " but only " +
                  std::to_string(join->spawned) + " branches spawned",
           nullptr);
      throw Halt{};
    }
    b.status = BranchStatus::WaitingJoin;
    cv_.wait(lk, [&] {
      return join->fired || (join->wait.all && join->arrived == join->spawned) || halted(b);
    });
    if (join->wait.all && join->arrived == join->spawned) join->fired = true;
    b.status = BranchStatus::Active;
    if (!join->fired) throw Halt{};
  } catch (const Halt&) {
    wait_children(*join);
    throw;
  }

  wait_children(*join);
  std::size_t cancelled = 0;
  nlohmann::json children = nlohmann::json::array();
  {
    std::lock_guard lk(mutex_);
    for (const auto& ch : join->children) {
      cancelled += ch->cancelled ? 1 : 0;
      children.push_back(ch->id);
    }
  }
  log_->emit(b.id, nullptr, EventKind::BranchJoin,
             {{"wait", wait_label(join->wait)},
              {"arrived", join->arrived},
              {"spawned", join->spawned},
              {"cancelled", cancelled},
              {"children", std::move(children)}});
  b.open_joins.pop_back();
}

void Instance::exec_fork(Branch& b, std::size_t level) {
  if (b.open_joins.empty()) throw RuntimeError("parallel_branch outside of a parallel block");
  const auto& join = b.open_joins.back();
  std::lock_guard lk(mutex_);
  checkpoint(b);
  if (join->fired) return;  // the partial join is already satisfied
  auto child = std::make_shared<Branch>();
  child->id = b.id + "." + std::to_string(++b.forks);
  child->parent = &b;
  child->join = join;
  child->frames.assign(b.frames.begin(), b.frames.begin() + static_cast<std::ptrdiff_t>(level + 1));
  child->frames[level].selector = 0;
  child->base_level = level + 1;
  NodePath pb;
  for (std::size_t l = 0; l <= level; ++l) {
    pb.push_back(b.frames[l].index);
    if (l < level) pb.push_back(b.frames[l].selector);
  }
  child->base_block = &std::get<ParallelBranch>(ast_->node_at(pb).kind).body;
  join->spawned += 1;
  join->children.push_back(child);
  all_branches_.push_back(child);
  log_->emit(b.id, nullptr, EventKind::BranchFork, {{"child", child->id}});
  start_thread(child);
}

void Instance::arrive(Branch& child) {
  {
    std::lock_guard lk(mutex_);
    if (child.cancelled) {
      child.status = BranchStatus::Cancelled;
    } else {
      Join& join = *child.join;
      join.arrived += 1;
      child.status = BranchStatus::Completed;
      log_->emit(child.id, nullptr, EventKind::BranchEnd, {{"parent", child.parent ? child.parent->id : ""}});
      if (!join.wait.all && !join.fired && join.arrived == static_cast<std::size_t>(join.wait.count)) {
        fire_locked(join, child.parent ? child.parent->id : "");
      }
    }
  }
  cv_.notify_all();
  std::lock_guard ck(critical_mutex_);
  critical_cv_.notify_all();
}

void Instance::fire_locked(Join& join, const std::string& joiner) {
  join.fired = true;
  for (const auto& ch : join.children) {
    if (ch->status == BranchStatus::Completed || ch->cancelled) continue;
    log_->emit(ch->id, nullptr, EventKind::Signal, {{"signal", "no_longer_necessary"}, {"join", joiner}});
    cancel_locked(*ch, joiner);
  }
}

void Instance::cancel_locked(Branch& b, const std::string& joiner) {
  b.cancelled = true;
  for (auto& [id, call] : in_flight_) {
    if (call.branch.get() == &b && !call.source.stop_requested()) {
      log_->emit(b.id, &call.position, EventKind::Signal, {{"signal", "stop_call"}});
      call.source.request_stop();
    }
  }
  auto cancel_children = [&](const Join& j) {
    for (const auto& ch : j.children) {
      if (ch->status == BranchStatus::Completed || ch->cancelled) continue;
      cancel_locked(*ch, joiner);
    }
  };
  for (const auto& j : b.open_joins) cancel_children(*j);
  for (const auto& [path, j] : b.restored_joins) cancel_children(*j);
}

void Instance::wait_children(Join& join) {
  std::vector<std::shared_ptr<Branch>> children;
  {
    std::lock_guard lk(mutex_);
    children = join.children;
  }
  for (const auto& ch : children) {
    if (ch->thread.joinable()) ch->thread.join();
  }
}

void Instance::exec_choose(Branch& b, const Choose& c, std::size_t level, std::span<const std::size_t> rest) {
  const std::size_t n = c.alternatives.size();
  auto run = [&](std::size_t selector, std::uint64_t mask, std::span<const std::size_t> entry) {
    b.frames.resize(level + 1);
    b.frames[level].selector = selector;
    b.frames[level].mask = mask;
    exec_block(b, selector < n ? c.alternatives[selector].body : c.otherwise, level + 1, entry);
  };

  if (rest.empty()) {
    const ContextSnapshot snap = store_->snapshot();
    std::uint64_t mask = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const Value v = c.alternatives[k].condition.eval(snap.values);
      if (!v.is_boolean()) {
        throw EvalError(std::string("alternative condition must be boolean, got ") + kind_name(v.kind()));
      }
      if (v.as_boolean()) mask |= std::uint64_t{1} << k;
    }
    if (mask == 0) {
      if (c.has_otherwise) run(n, 0, {});
      return;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (mask & (std::uint64_t{1} << k)) run(k, mask, {});
    }
    return;
  }

  if (rest.size() < 2) throw RuntimeError("corrupt program counter at choose");
  const std::size_t selector = rest[0];
  const std::uint64_t mask = rest[1];
  run(selector, mask, rest.subspan(2));
  if (selector >= n) return;
  for (std::size_t k = selector + 1; k < n; ++k) {
    if (mask & (std::uint64_t{1} << k)) run(k, mask, {});
  }
}

void Instance::exec_cycle(Branch& b, const Cycle& c, std::size_t level, std::span<const std::size_t> rest) {
  std::uint64_t iterations = 0;
  auto body = [&](std::span<const std::size_t> entry) {
    b.frames.resize(level + 1);
    b.frames[level].selector = 0;
    exec_block(b, c.body, level + 1, entry);
  };
  if (!rest.empty()) {
    ++iterations;
    body(rest.subspan(1));
  }
  while (true) {
    checkpoint(b);
    const Value v = c.condition.eval(store_->snapshot().values);
    if (!v.is_boolean()) throw EvalError(std::string("cycle condition must be boolean, got ") + kind_name(v.kind()));
    if (!v.as_boolean()) break;
    if (++iterations > options_.max_iterations) {
      throw RuntimeError("iteration cap exceeded (" + std::to_string(options_.max_iterations) + ")");
    }
    body({});
  }
}

void Instance::exec_critical(Branch& b, const Critical& c, std::size_t level, std::span<const std::size_t> rest) {
  if (b.held_sections.count(c.section) != 0) {
    throw RuntimeError("critical section '" + c.section + "' is not reentrant");
  }
  CriticalGuard guard(*this, b, c.section);
  const BranchStatus outer = b.status;
  b.status = BranchStatus::InCritical;
  b.frames.resize(level + 1);
  b.frames[level].selector = 0;
  exec_block(b, c.body, level + 1, rest.empty() ? rest : rest.subspan(1));
  b.status = outer;
}

void Instance::deliver_stop(const std::string& source) {
  std::vector<std::stop_source> to_stop;
  {
    std::lock_guard lk(mutex_);
    if (lifecycle_ != Lifecycle::Running || stop_requested_) return;
    stop_requested_ = true;
    stop_source_ = source;
    log_->emit(root_->id, nullptr, EventKind::Signal, {{"signal", "stop"}, {"source", source}});
    log_->emit(root_->id, nullptr, EventKind::StopAcknowledged, {{"source", source}});
    for (auto& [id, call] : in_flight_) {
      if (call.source.stop_requested()) continue;
      log_->emit(call.branch ? call.branch->id : root_->id, &call.position, EventKind::Signal,
                 {{"signal", "stop_call"}});
      to_stop.push_back(call.source);
    }
  }
  for (auto& s : to_stop) s.request_stop();
  cv_.notify_all();
  std::lock_guard ck(critical_mutex_);
  critical_cv_.notify_all();
}

bool Instance::stop() {
  {
    std::lock_guard lk(mutex_);
    if (lifecycle_ != Lifecycle::Running || stop_requested_) return false;
  }
  deliver_stop("controller");
  return true;
}

void Instance::stop_call(const PositionId& position) {
  std::vector<std::stop_source> to_stop;
  {
    std::lock_guard lk(mutex_);
    for (auto& [id, call] : in_flight_) {
      if (call.position != position || call.source.stop_requested()) continue;
      log_->emit(call.branch ? call.branch->id : root_->id, &call.position, EventKind::Signal,
                 {{"signal", "stop_call"}});
      to_stop.push_back(call.source);
    }
  }
  for (auto& s : to_stop) s.request_stop();
}

void Instance::fail(Branch& b, const std::string& message, const PositionId* position) {
  {
    std::lock_guard lk(mutex_);
    b.status = BranchStatus::Failed;
    if (error_) return;
    error_ = message;
    log_->emit(b.id, position, EventKind::Error, {{"message", message}});
  }
  deliver_stop("error");
}

bool jump_is_legal(const WorkflowAst& ast, const NodePath& from, const NodePath& to) {
  // Levels shared by both paths: equal (index, selector) pairs.
  std::size_t common = 0;
  while (2 * common + 1 < from.size() && 2 * common + 1 < to.size() && from[2 * common] == to[2 * common] &&
         from[2 * common + 1] == to[2 * common + 1]) {
    ++common;
  }
  auto crosses = [&](const NodePath& path) {
    const Block* block = &ast.body;
    for (std::size_t l = 0; 2 * l + 1 < path.size(); ++l) {
      const Node& node = (*block)[path[2 * l]];
      if (l >= common && is_parallel_node(node)) return true;
      block = &child_block(node, path[2 * l + 1]);
    }
    return false;
  };
  return !crosses(from) && !crosses(to);
}

void Instance::check_jump(const Branch&, const NodePath& from, const NodePath& to) const {
  if (!jump_is_legal(*ast_, from, to)) throw RuntimeError("illegal jump: target crosses a parallel boundary");
}

std::vector<std::size_t> Instance::entry_for(const NodePath& target, std::size_t from_level) const {
  std::vector<std::size_t> out;
  const Block* block = &ast_->body;
  for (std::size_t l = 0;; ++l) {
    const std::size_t index = target[2 * l];
    if (l >= from_level) out.push_back(index);
    if (2 * l + 1 >= target.size()) break;
    const Node& node = (*block)[index];
    const std::size_t selector = target[2 * l + 1];
    if (l >= from_level) {
      out.push_back(selector);
      if (std::holds_alternative<Choose>(node.kind)) out.push_back(0);
    }
    block = &child_block(node, selector);
  }
  return out;
}

std::vector<std::size_t> Instance::encode_pc(const Branch& b) const {
  std::vector<std::size_t> flat;
  const Block* block = &ast_->body;
  for (std::size_t l = 0; l < b.frames.size(); ++l) {
    flat.push_back(b.frames[l].index);
    if (l + 1 == b.frames.size()) break;
    const Node& n = (*block)[b.frames[l].index];
    flat.push_back(b.frames[l].selector);
    if (std::holds_alternative<Choose>(n.kind)) flat.push_back(b.frames[l].mask);
    block = &child_block(n, b.frames[l].selector);
  }
  return flat;
}

NodePath Instance::node_path(std::span<const std::size_t> pc) const {
  const DecodedPc d = decode_pc(*ast_, pc);
  NodePath out;
  for (std::size_t l = 0; l < d.frames.size(); ++l) {
    out.push_back(d.frames[l].index);
    if (l + 1 < d.frames.size()) out.push_back(d.frames[l].selector);
  }
  return out;
}

Lifecycle Instance::lifecycle() const {
  std::lock_guard lk(mutex_);
  return lifecycle_;
}

std::vector<BranchInfo> Instance::branches() const {
  std::lock_guard lk(mutex_);
  std::vector<BranchInfo> out;
  for (const auto& b : all_branches_) out.push_back({b->id, b->status});
  return out;
}

InstanceState Instance::save() const {
  std::lock_guard lk(mutex_);
  if (lifecycle_ != Lifecycle::Stopped) throw RuntimeError("only a stopped instance can be saved");
  InstanceState st;
  st.lifecycle = lifecycle_;
  st.instance_id = options_.instance_id;
  const ContextSnapshot snap = store_->snapshot();
  st.context = snap.values;
  st.version = snap.version;
  st.passthroughs = passthroughs_;
  st.next_seq = log_->next_seq();
  for (const auto& b : all_branches_) {
    const BranchStatus s = b->status;
    if (s == BranchStatus::Completed || s == BranchStatus::Cancelled || b->cancelled) continue;
    SavedBranch sb;
    sb.id = b->id;
    if (b->parent) sb.parent = b->parent->id;
    sb.path = encode_pc(*b);
    sb.forks = b->forks;
    sb.passthrough = b->passthrough ? b->passthrough : b->pending_passthrough;
    for (const auto& j : b->open_joins) sb.joins.push_back({j->parallel, j->arrived, j->spawned, j->fired});
    for (const auto& [path, j] : b->restored_joins) sb.joins.push_back({j->parallel, j->arrived, j->spawned, j->fired});
    st.branches.push_back(std::move(sb));
  }
  return st;
}

}  // namespace wee
