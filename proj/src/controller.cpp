#include "mltx/controller.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace mltx {

const char* to_string(CtlState s) noexcept {
  switch (s) {
    case CtlState::TaCtl: return "ta_ctl";
    case CtlState::WaitForLocks: return "wait_for_locks";
    case CtlState::WaitForRecovery: return "wait_for_recovery";
    case CtlState::Committed: return "committed";
    case CtlState::Aborted: return "aborted";
  }
  return "?";
}

const char* to_string(VictimPolicy p) noexcept {
  return p == VictimPolicy::GreatestId ? "greatest-id" : "least-victimized";
}

VictimPolicy parse_victim_policy(const std::string& name) {
  if (name == "greatest-id") return VictimPolicy::GreatestId;
  if (name == "least-victimized") return VictimPolicy::LeastVictimized;
  throw Error("unknown victim policy '" + name + "' (expected greatest-id or least-victimized)");
}

std::string choose_victim(const std::vector<std::string>& cycle, const World& w) {
  if (w.victim_policy == VictimPolicy::GreatestId) return *std::max_element(cycle.begin(), cycle.end());
  auto count = [&](const std::string& m) {
    auto it = w.ctl.victim_counts.find(m);
    return it == w.ctl.victim_counts.end() ? 0 : it->second;
  };
  return *std::max_element(cycle.begin(), cycle.end(), [&](const std::string& a, const std::string& b) {
    if (count(a) != count(b)) return count(a) > count(b);
    return a < b;
  });
}

namespace {

json updates_json(const std::vector<GenuineUpdate>& ups) {
  json out = json::array();
  for (const auto& u : ups) out.push_back(genuine_to_json(u));
  return out;
}

}  // namespace

World::World(const Workload& wl, std::uint64_t seed_, SubsumptionMode mode)
    : workload(&wl), store(wl.initial), seed(seed_), subsumption(mode) {
  for (const auto& p : wl.programs) machines.emplace(p.machine_id, MachineCtl{});
}

bool World::is_terminated(const std::string& m) const {
  return terminated(program(m), machines.at(m).pc);
}

StepFootprint World::current_footprint(const std::string& m) const {
  const auto& p = program(m);
  std::size_t pc = machines.at(m).pc;
  if (terminated(p, pc)) return {};
  return footprint(p.steps[pc]);
}

StepIntent World::current_intent(const std::string& m) const {
  return eval_step(program(m), machines.at(m).pc, store, seed);
}

bool World::is_running(const std::string& m) const {
  return ctl.trans_act.contains(m) && machines.at(m).pending == Pending::None;
}

LockSet World::wanted_locks(const std::string& m) const {
  if (!is_running(m) || is_terminated(m)) return {};
  return new_locks(m, current_footprint(m), store.classification(m), locks);
}

void World::register_machine(const std::string& m, Round& round) {
  auto& mc = machines.at(m);
  std::uint64_t planned = mc.join_round;
  mc = MachineCtl{};
  mc.joined = true;
  mc.join_round = planned;
  ctl.trans_act.insert(m);
  ctl.histories[m].clear();
  round.event({{"type", "register"}, {"machine", m}});
}

void World::set_state(const std::string& m, CtlState to, Round& round, const char* reason) {
  auto& mc = machines.at(m);
  if (mc.state == to) return;
  json e = {{"type", "ctl_state"}, {"machine", m}, {"from", to_string(mc.state)}, {"to", to_string(to)}};
  if (reason != nullptr) e["reason"] = reason;
  round.event(std::move(e));
  mc.state = to;
}

RecoveryUpdates recovery_upd(const StepIntent& intent, const Store& pre_fire) {
  RecoveryUpdates out;
  for (const auto& l : intent.genuine_write_loc) out.genuine_restores.push_back({l, eval(l, pre_fire)});
  for (const auto& p : intent.partial) out.partial_inverses.emplace_back(p.loc, inverse_op(p.op, p.arg));
  return out;
}

void undo(World& w, const std::string& m, Round& round) {
  auto& hist = w.ctl.histories[m];
  if (hist.empty()) throw std::logic_error("undo on empty history of " + m);
  HistoryEntry entry = std::move(hist.back());
  hist.pop_back();

  // Inverses are applied to the current values, so other machines' compatible
  // contributions to the same location survive.
  std::map<LocationPath, Value> folded;
  for (const auto& [l, inv] : entry.partial_inverses) {
    auto it = folded.find(l);
    if (it == folded.end()) it = folded.emplace(l, eval(l, w.store)).first;
    it->second = apply_op(inv.op, it->second, inv.arg);
  }
  std::vector<GenuineUpdate> restore = entry.genuine_restores;
  for (auto& [l, v] : folded) restore.push_back({l, std::move(v)});
  AggregateResult agg = aggregate(w.store, restore, {});
  if (!agg.consistent()) throw std::logic_error("inconsistent restore for " + m + ": " + *agg.inconsistency);
  apply_updates(w.store, agg.updates);

  LockSet released;
  for (const auto& [l, o] : entry.acquired_locks) {
    if (w.locks.release(m, l, o)) released.emplace(l, o);
  }
  for (const auto& [l, o] : entry.absorbed_reads) w.locks.install(m, l, o);

  auto& mc = w.machines.at(m);
  json e = {{"type", "undo"},
            {"machine", m},
            {"step_seq", entry.step_seq},
            {"step", entry.pc},
            {"restored", updates_json(agg.updates)},
            {"released", lockset_to_json(released)},
            {"reinstated", lockset_to_json(entry.absorbed_reads)}};
  round.event(std::move(e));
  round.ctl.insert(round.ctl.end(), agg.updates.begin(), agg.updates.end());
  mc.pc = entry.pc;
}

void call_commit(World& w, const std::string& m, Round& round) {
  w.ctl.commit_requests.insert(m);
  w.machines.at(m).pending = Pending::Commit;
  round.event({{"type", "commit_request"}, {"machine", m}});
}

void call_abort(World& w, const std::string& m, const std::string& reason, Round& round) {
  w.ctl.abort_requests.insert(m);
  w.ctl.lock_requests.erase(m);
  auto& mc = w.machines.at(m);
  mc.pending = Pending::Abort;
  mc.reply = LockReply::None;
  round.event({{"type", "abort_request"}, {"machine", m}, {"reason", reason}});
}

std::map<std::string, std::set<std::string>> wait_graph(const World& w) {
  std::map<std::string, std::set<std::string>> g;
  for (const auto& m : w.ctl.trans_act) {
    LockSet wanted = w.wanted_locks(m);
    if (wanted.empty()) continue;
    auto b = blockers(m, wanted, w.ctl.trans_act, w.locks, w.subsumption);
    if (!b.empty()) g[m] = std::move(b);
  }
  return g;
}

std::vector<std::vector<std::string>> wait_cycles(const World& w) {
  auto g = wait_graph(w);
  std::vector<std::vector<std::string>> cycles;
  constexpr std::size_t kMaxCycles = 4096;
  // Each cycle is found once, from its least member, visiting only greater nodes.
  for (const auto& [start, _] : g) {
    std::vector<std::string> path{start};
    std::set<std::string> on_path{start};
    std::function<void(const std::string&)> dfs = [&](const std::string& u) {
      auto it = g.find(u);
      if (it == g.end()) return;
      for (const auto& v : it->second) {
        if (cycles.size() >= kMaxCycles) return;
        if (v == start) {
          cycles.push_back(path);
        } else if (v > start && !on_path.contains(v)) {
          path.push_back(v);
          on_path.insert(v);
          dfs(v);
          on_path.erase(v);
          path.pop_back();
        }
      }
    };
    dfs(start);
  }
  return cycles;
}

std::set<std::string> deadlocked(const World& w) {
  // Members of some cycle, i.e. nodes reaching themselves.
  auto g = wait_graph(w);
  std::set<std::string> out;
  for (const auto& [start, _] : g) {
    std::set<std::string> seen;
    std::vector<std::string> stack(g[start].begin(), g[start].end());
    while (!stack.empty()) {
      std::string u = stack.back();
      stack.pop_back();
      if (u == start) {
        out.insert(start);
        break;
      }
      if (!seen.insert(u).second) continue;
      if (auto it = g.find(u); it != g.end()) stack.insert(stack.end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

std::set<std::string> victims_to_mark(const World& w) {
  std::set<std::string> chosen;
  for (const auto& cycle : wait_cycles(w)) {
    bool handled = std::any_of(cycle.begin(), cycle.end(), [&](const std::string& m) {
      return w.ctl.victims.contains(m) || chosen.contains(m);
    });
    if (handled) continue;
    std::string v = choose_victim(cycle, w);
    const auto& mc = w.machines.at(v);
    if (mc.state == CtlState::TaCtl && w.is_running(v)) chosen.insert(v);
  }
  return chosen;
}

bool lock_handler_enabled(const World& w) { return !w.ctl.lock_requests.empty(); }

void lock_handler_step(World& w, Round& round) {
  if (w.ctl.lock_requests.empty()) return;
  std::string m = w.ctl.lock_requests.begin()->first;
  w.ctl.lock_requests.erase(w.ctl.lock_requests.begin());
  LockSet wanted = w.wanted_locks(m);
  auto& mc = w.machines.at(m);
  if (auto b = blockers(m, wanted, w.ctl.trans_act, w.locks, w.subsumption); !b.empty()) {
    mc.reply = LockReply::Refused;
    round.event({{"type", "lock_refused"}, {"machine", m}, {"locks", lockset_to_json(wanted)}, {"blockers", b}});
    return;
  }
  GrantOutcome g = handle_lock_request(m, wanted, w.ctl.trans_act, w.locks, w.subsumption);
  mc.reply = LockReply::Granted;
  mc.acquired.insert(g.locks.begin(), g.locks.end());
  mc.absorbed.insert(g.absorbed.begin(), g.absorbed.end());
  round.event({{"type", "lock_granted"},
               {"machine", m},
               {"locks", lockset_to_json(g.locks)},
               {"absorbed", lockset_to_json(g.absorbed)}});
}

bool deadlock_handler_enabled(const World& w) { return !victims_to_mark(w).empty(); }

void deadlock_handler_step(World& w, Round& round) {
  auto dl = deadlocked(w);
  for (const auto& v : victims_to_mark(w)) {
    w.ctl.victims.insert(v);
    ++w.ctl.victim_counts[v];
    round.event({{"type", "victimized"}, {"machine", v}, {"deadlocked", dl}});
  }
}

bool recovery_enabled(const World& w) { return !w.ctl.victims.empty(); }

void recovery_step(World& w, Round& round) {
  if (w.ctl.victims.empty()) return;
  std::string m = *w.ctl.victims.begin();
  if (!deadlocked(w).contains(m)) {
    w.ctl.victims.erase(m);
    round.event({{"type", "recovered"}, {"machine", m}});
    return;
  }
  undo(w, m, round);
}

bool commit_enabled(const World& w) { return !w.ctl.commit_requests.empty(); }

void commit_step(World& w, Round& round) {
  if (w.ctl.commit_requests.empty()) return;
  std::string m = *w.ctl.commit_requests.begin();
  w.ctl.commit_requests.erase(m);
  LockSet released = w.locks.release_all(m);
  w.ctl.trans_act.erase(m);
  auto& mc = w.machines.at(m);
  mc.pending = Pending::None;
  round.event({{"type", "commit"}, {"machine", m}, {"released", lockset_to_json(released)}});
  w.set_state(m, CtlState::Committed, round, nullptr);
}

bool abort_enabled(const World& w) { return !w.ctl.abort_requests.empty(); }

void abort_step(World& w, Round& round) {
  std::set<std::string> requests = std::move(w.ctl.abort_requests);
  w.ctl.abort_requests.clear();
  for (const auto& m : requests) {
    std::vector<std::uint64_t> undone;
    while (!w.ctl.histories[m].empty()) {
      undone.push_back(w.ctl.histories[m].back().step_seq);
      undo(w, m, round);
    }
    LockSet residual = w.locks.release_all(m);
    w.ctl.trans_act.erase(m);
    w.ctl.victims.erase(m);
    w.ctl.lock_requests.erase(m);
    auto& mc = w.machines.at(m);
    mc.pending = Pending::None;
    mc.reply = LockReply::None;
    mc.acquired.clear();
    mc.absorbed.clear();
    round.event({{"type", "abort"}, {"machine", m}, {"undone", undone}, {"released", lockset_to_json(residual)}});
    w.set_state(m, CtlState::Aborted, round, nullptr);
  }
}

}  // namespace mltx
