#include "mltx/executor.hpp"

#include <algorithm>
#include <stdexcept>

namespace mltx {

const char* to_string(SchedulerKind k) noexcept {
  return k == SchedulerKind::RoundRobin ? "rr" : "random";
}

SchedulerKind parse_scheduler(const std::string& name) {
  if (name == "rr") return SchedulerKind::RoundRobin;
  if (name == "random") return SchedulerKind::Random;
  throw Error("unknown scheduler '" + name + "' (expected rr or random)");
}

std::uint64_t default_max_rounds(const Workload& wl) {
  return std::max<std::uint64_t>(100 * wl.total_steps(), 100);
}

const std::vector<std::string>& component_agents() {
  static const std::vector<std::string> names{"LockHandler", "DeadlockHandler", "Recovery", "Commit", "Abort"};
  return names;
}

namespace {

std::optional<StepIntent> consistent_intent(const World& w, const std::string& m) {
  try {
    StepIntent intent = w.current_intent(m);
    if (!aggregate(w.store, intent.genuine, intent.partial).consistent()) return std::nullopt;
    return intent;
  } catch (const Error&) {
    return std::nullopt;
  }
}

void can_go(World& w, const std::string& m, Round& round) {
  w.set_state(m, CtlState::TaCtl, round, nullptr);
  StepIntent intent;
  try {
    intent = w.current_intent(m);
  } catch (const Error& e) {
    call_abort(w, m, std::string("step cannot be evaluated: ") + e.what(), round);
    return;
  }
  AggregateResult own = aggregate(w.store, intent.genuine, intent.partial);
  if (!own.consistent()) {
    call_abort(w, m, "inconsistent step: " + *own.inconsistency, round);
    return;
  }
  std::map<std::string, StepIntent> intents;
  for (const auto& n : partners(w, m)) {
    if (n == m) continue;
    intents.emplace(n, w.current_intent(n));
  }
  intents.emplace(m, std::move(intent));
  fire(w, intents, round);
}

}  // namespace

bool ready_to_fire(const World& w, const std::string& m) {
  if (!w.is_running(m) || w.ctl.victims.contains(m) || w.is_terminated(m)) return false;
  const auto& mc = w.machines.at(m);
  bool at_fire_point = (mc.state == CtlState::WaitForLocks && mc.reply == LockReply::Granted) ||
                       (mc.state == CtlState::TaCtl && w.wanted_locks(m).empty());
  return at_fire_point && consistent_intent(w, m).has_value();
}

std::set<std::string> partners(const World& w, const std::string& m) {
  std::set<std::string> group{m};
  std::set<LocationPath> touched = w.current_footprint(m).w_loc;
  std::vector<std::string> candidates;
  for (const auto& n : w.ctl.trans_act) {
    if (n != m && ready_to_fire(w, n)) candidates.push_back(n);
  }
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& n : candidates) {
      if (group.contains(n)) continue;
      auto w_loc = w.current_footprint(n).w_loc;
      bool shares = std::any_of(w_loc.begin(), w_loc.end(), [&](const LocationPath& l) { return touched.contains(l); });
      if (!shares) continue;
      group.insert(n);
      touched.insert(w_loc.begin(), w_loc.end());
      grew = true;
    }
  }
  return group;
}

void fire(World& w, const std::map<std::string, StepIntent>& intents, Round& round) {
  const Store pre = w.store;
  std::vector<GenuineUpdate> genuine;
  std::vector<PartialUpdate> partial;
  json members = json::array();
  for (const auto& [n, intent] : intents) {
    genuine.insert(genuine.end(), intent.genuine.begin(), intent.genuine.end());
    partial.insert(partial.end(), intent.partial.begin(), intent.partial.end());
    members.push_back(n);
  }
  AggregateResult agg = aggregate(pre, genuine, partial);
  if (!agg.consistent()) {
    round.event({{"type", "fire_failed"}, {"machines", members}, {"reason", *agg.inconsistency}});
    for (const auto& [n, _] : intents) {
      w.set_state(n, CtlState::TaCtl, round, nullptr);
      call_abort(w, n, "inconsistent partner group: " + *agg.inconsistency, round);
    }
    return;
  }
  apply_updates(w.store, agg.updates);

  json steps = json::object();
  json held = json::object();
  json temps = json::object();
  for (const auto& [n, intent] : intents) {
    auto& mc = w.machines.at(n);
    held[n] = lockset_to_json(w.locks.held_by(n));
    RecoveryUpdates rec = recovery_upd(intent, pre);
    HistoryEntry entry{std::move(rec.genuine_restores), std::move(rec.partial_inverses), std::move(mc.acquired),
                       std::move(mc.absorbed), mc.pc, round.seq};
    w.ctl.histories[n].push_back(std::move(entry));
    temps[n] = lockset_to_json(w.locks.release_temp(n));
    steps[n] = mc.pc;
    mc.acquired.clear();
    mc.absorbed.clear();
    mc.reply = LockReply::None;
    w.set_state(n, CtlState::TaCtl, round, nullptr);
    ++mc.pc;
    round.delta[n] = intent.genuine;
    round.gamma[n] = intent.partial;
    round.reads[n] = intent.read_values;
  }
  json result = json::array();
  for (const auto& u : agg.updates) result.push_back(genuine_to_json(u));
  round.event({{"type", "fire"},
               {"machines", members},
               {"step_seq", round.seq},
               {"steps", steps},
               {"result", result},
               {"held", held},
               {"temp_released", temps}});
}

void machine_step(World& w, const std::string& m, Round& round) {
  auto& mc = w.machines.at(m);
  switch (mc.state) {
    case CtlState::TaCtl: {
      if (w.ctl.victims.contains(m)) {
        w.set_state(m, CtlState::WaitForRecovery, round, "victim");
        return;
      }
      if (w.is_terminated(m)) {
        call_commit(w, m, round);
        return;
      }
      LockSet wanted = w.wanted_locks(m);
      if (!wanted.empty()) {
        w.ctl.lock_requests[m] = wanted;
        mc.reply = LockReply::None;
        round.event({{"type", "lock_request"}, {"machine", m}, {"locks", lockset_to_json(wanted)}});
        w.set_state(m, CtlState::WaitForLocks, round, nullptr);
        return;
      }
      can_go(w, m, round);
      return;
    }
    case CtlState::WaitForLocks:
      if (mc.reply == LockReply::Granted) {
        can_go(w, m, round);
      } else if (mc.reply == LockReply::Refused) {
        mc.reply = LockReply::None;
        w.set_state(m, CtlState::TaCtl, round, "refused");
      } else {
        throw std::logic_error(m + " activated while its lock request is pending");
      }
      return;
    case CtlState::WaitForRecovery:
      if (w.ctl.victims.contains(m)) throw std::logic_error(m + " activated before recovery");
      w.set_state(m, CtlState::TaCtl, round, "recovered");
      return;
    case CtlState::Committed:
    case CtlState::Aborted:
      throw std::logic_error(m + " activated after leaving TransAct");
  }
}

Simulator::Simulator(const Workload& wl, RunOptions opts)
    : workload_(&wl), opts_(std::move(opts)), world_(wl, opts_.seed, opts_.subsumption), rng_(opts_.seed) {
  world_.victim_policy = opts_.victim_policy;
  if (opts_.initial_root) world_.store.set_root(opts_.initial_root->as_node());
  if (opts_.machines.empty()) {
    for (const auto& p : wl.programs) participants_.push_back(p.machine_id);
  } else {
    for (const auto& m : opts_.machines) {
      if (!wl.has_machine(m)) throw Error("unknown machine '" + m + "'");
      participants_.push_back(m);
    }
  }
  std::vector<std::string> sorted = participants_;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  participants_ = sorted;

  agents_.push_back(kRegistrationAgent);
  agents_.insert(agents_.end(), sorted.begin(), sorted.end());
  for (const auto& c : component_agents()) agents_.push_back(c);

  max_rounds_ = opts_.max_rounds != 0 ? opts_.max_rounds : default_max_rounds(wl);

  if (opts_.stagger) {
    Rng stagger_rng(splitmix64(opts_.seed ^ 0x7374616767657221ULL));
    auto span = static_cast<std::int64_t>(2 * sorted.size());
    for (const auto& m : sorted) {
      world_.machines.at(m).join_round = static_cast<std::uint64_t>(between(stagger_rng, 0, span));
    }
  }

  trace_.header.workload_digest = wl.digest;
  trace_.header.seed = opts_.seed;
  trace_.header.scheduler = to_string(opts_.scheduler);
  trace_.header.strict_subsumption = opts_.subsumption == SubsumptionMode::Strict;
  trace_.header.suspend = opts_.suspend;
  trace_.header.stagger = opts_.stagger;
  trace_.header.victim_policy = to_string(opts_.victim_policy);
  trace_.header.max_rounds = max_rounds_;
  trace_.header.initial_store = world_.store.root_value();
  trace_.header.machines = participants_;

  if (!participants_.empty()) {
    Round r;
    r.seq = next_seq_++;
    r.agent = kRegistrationAgent;
    register_due(r, false);
    trace_.rounds.push_back(std::move(r));
  }
}

bool Simulator::registration_due() const {
  return std::any_of(participants_.begin(), participants_.end(), [&](const std::string& m) {
    const auto& mc = world_.machines.at(m);
    return !mc.joined && mc.join_round < next_seq_;
  });
}

void Simulator::register_due(Round& round, bool force) {
  std::uint64_t limit = round.seq;
  if (force) {
    // Nothing else can move: bring forward the earliest planned joins.
    limit = UINT64_MAX;
    for (const auto& m : participants_) {
      const auto& mc = world_.machines.at(m);
      if (!mc.joined) limit = std::min(limit, mc.join_round);
    }
  }
  for (const auto& m : participants_) {
    const auto& mc = world_.machines.at(m);
    if (!mc.joined && mc.join_round <= limit) world_.register_machine(m, round);
  }
}

bool Simulator::is_enabled(const std::string& agent) const {
  const auto& c = world_.ctl;
  if (agent == kRegistrationAgent) {
    if (registration_due()) return true;
    bool unjoined = std::any_of(participants_.begin(), participants_.end(),
                                [&](const std::string& m) { return !world_.machines.at(m).joined; });
    if (!unjoined) return false;
    return std::none_of(agents_.begin() + 1, agents_.end(), [&](const std::string& a) { return is_enabled(a); });
  }
  if (agent == "LockHandler") return lock_handler_enabled(world_);
  if (agent == "DeadlockHandler") return deadlock_handler_enabled(world_);
  if (agent == "Recovery") return recovery_enabled(world_);
  if (agent == "Commit") return commit_enabled(world_);
  if (agent == "Abort") return abort_enabled(world_);
  if (!world_.is_running(agent)) return false;
  const auto& mc = world_.machines.at(agent);
  switch (mc.state) {
    case CtlState::TaCtl: {
      if (c.victims.contains(agent) || !opts_.suspend || world_.is_terminated(agent)) return true;
      LockSet wanted = world_.wanted_locks(agent);
      return wanted.empty() || !cannot_be_granted(agent, wanted, c.trans_act, world_.locks, world_.subsumption);
    }
    case CtlState::WaitForLocks: return mc.reply != LockReply::None;
    case CtlState::WaitForRecovery: return !c.victims.contains(agent);
    default: return false;
  }
}

std::vector<std::string> Simulator::enabled_agents() const {
  std::vector<std::string> out;
  for (const auto& a : agents_) {
    if (is_enabled(a)) out.push_back(a);
  }
  return out;
}

bool Simulator::finished() const {
  if (!world_.ctl.trans_act.empty()) return false;
  return std::all_of(participants_.begin(), participants_.end(),
                     [&](const std::string& m) { return world_.machines.at(m).joined; });
}

bool Simulator::round_limit_reached() const { return next_seq_ > max_rounds_; }

void Simulator::activate(const std::string& agent) {
  if (!is_enabled(agent)) throw std::logic_error("agent " + agent + " is not enabled");
  Round r;
  r.seq = next_seq_;
  r.agent = agent;
  if (agent == kRegistrationAgent) {
    register_due(r, !registration_due());
  } else if (agent == "LockHandler") {
    lock_handler_step(world_, r);
  } else if (agent == "DeadlockHandler") {
    deadlock_handler_step(world_, r);
  } else if (agent == "Recovery") {
    recovery_step(world_, r);
  } else if (agent == "Commit") {
    commit_step(world_, r);
  } else if (agent == "Abort") {
    abort_step(world_, r);
  } else {
    machine_step(world_, agent, r);
  }
  ++next_seq_;
  trace_.rounds.push_back(std::move(r));
}

bool Simulator::step() {
  if (finished() || round_limit_reached()) return false;
  std::vector<std::string> enabled = enabled_agents();
  if (enabled.empty()) throw std::logic_error("no agent is enabled but the run has not finished");
  std::string pick;
  if (opts_.scheduler == SchedulerKind::RoundRobin) {
    for (std::size_t k = 0; k < agents_.size() && pick.empty(); ++k) {
      std::size_t idx = (rr_next_ + k) % agents_.size();
      if (std::find(enabled.begin(), enabled.end(), agents_[idx]) != enabled.end()) {
        pick = agents_[idx];
        rr_next_ = idx + 1;
      }
    }
  } else {
    pick = enabled[below(rng_, enabled.size())];
  }
  activate(pick);
  return true;
}

Trace Simulator::finish() {
  Trace t = trace_;
  t.footer.completed = finished();
  t.footer.round_limit_exceeded = !t.footer.completed;
  t.footer.rounds = t.rounds.size();
  for (const auto& r : t.rounds) {
    for (const auto& e : r.events) {
      if (e["type"] == "commit") t.footer.committed.push_back(e["machine"].get<std::string>());
      if (e["type"] == "abort") t.footer.aborted.push_back(e["machine"].get<std::string>());
    }
  }
  t.footer.final_store = world_.store.root_value();
  return t;
}

Trace Simulator::run() {
  while (step()) {
  }
  return finish();
}

Trace run(const Workload& wl, const RunOptions& opts) {
  Simulator sim(wl, opts);
  return sim.run();
}

}  // namespace mltx
