#pragma once

// Transaction controller components (Commit, LockHandler, DeadlockHandler,
// Recovery, Abort) and the shared world state they operate on.
//
// Components are state transformations invoked one per activation; where the
// controller has a free choice among machines it takes the least machine id.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mltx/locks.hpp"
#include "mltx/ops.hpp"
#include "mltx/trace.hpp"
#include "mltx/values.hpp"
#include "mltx/workload.hpp"

namespace mltx {

enum class CtlState : std::uint8_t { TaCtl, WaitForLocks, WaitForRecovery, Committed, Aborted };

const char* to_string(CtlState s) noexcept;

enum class Pending : std::uint8_t { None, Commit, Abort };

struct MachineCtl {
  CtlState state = CtlState::TaCtl;
  std::size_t pc = 0;
  LockReply reply = LockReply::None;
  Pending pending = Pending::None;
  bool joined = false;
  std::uint64_t join_round = 0;
  // Granted since the last fire; recorded in the next history entry.
  LockSet acquired;
  LockSet absorbed;
};

using InverseUpdate = std::pair<LocationPath, InversePair>;

struct RecoveryUpdates {
  std::vector<GenuineUpdate> genuine_restores;
  std::vector<InverseUpdate> partial_inverses;
};

struct HistoryEntry {
  std::vector<GenuineUpdate> genuine_restores;
  std::vector<InverseUpdate> partial_inverses;
  LockSet acquired_locks;
  LockSet absorbed_reads;
  std::size_t pc = 0;
  std::uint64_t step_seq = 0;
};

struct ControllerState {
  std::set<std::string> trans_act;
  std::set<std::string> commit_requests;
  std::set<std::string> abort_requests;
  std::set<std::string> victims;
  std::map<std::string, std::vector<HistoryEntry>> histories;
  /// Pending lock requests, at most one per machine.
  std::map<std::string, LockSet> lock_requests;
  /// How often each machine has been victimized so far.
  std::map<std::string, std::uint64_t> victim_counts;
};

enum class VictimPolicy : std::uint8_t {
  /// The member with the greatest machine id.
  GreatestId,
  /// The member victimized least often so far; ties go to the greatest id.
  LeastVictimized,
};

const char* to_string(VictimPolicy p) noexcept;
/// "greatest-id" or "least-victimized"; throws Error otherwise.
VictimPolicy parse_victim_policy(const std::string& name);

struct World;

std::string choose_victim(const std::vector<std::string>& cycle, const World& w);

struct World {
  World(const Workload& wl, std::uint64_t seed, SubsumptionMode mode);

  const Workload* workload;
  Store store;
  LockTable locks;
  ControllerState ctl;
  std::map<std::string, MachineCtl> machines;
  std::uint64_t seed;
  SubsumptionMode subsumption;
  VictimPolicy victim_policy = VictimPolicy::GreatestId;

  const Program& program(const std::string& m) const { return workload->program(m); }
  bool is_terminated(const std::string& m) const;
  /// Footprint of the machine's current step; empty once terminated.
  StepFootprint current_footprint(const std::string& m) const;
  StepIntent current_intent(const std::string& m) const;
  /// newLocks for the current step; empty when terminated or awaiting commit/abort.
  LockSet wanted_locks(const std::string& m) const;
  /// Active in TransAct and not waiting on Commit or Abort.
  bool is_running(const std::string& m) const;

  void register_machine(const std::string& m, Round& round);
  void set_state(const std::string& m, CtlState to, Round& round, const char* reason);
};

RecoveryUpdates recovery_upd(const StepIntent& intent, const Store& pre_fire);

/// Pops and reverts the youngest history entry of `m`.
void undo(World& w, const std::string& m, Round& round);

void call_commit(World& w, const std::string& m, Round& round);
void call_abort(World& w, const std::string& m, const std::string& reason, Round& round);

/// Wait(M, N): M needs a lock that N blocks.
std::map<std::string, std::set<std::string>> wait_graph(const World& w);
/// Simple cycles of the wait graph, each rotated to start at its least member.
std::vector<std::vector<std::string>> wait_cycles(const World& w);
std::set<std::string> deadlocked(const World& w);

/// Victims the DeadlockHandler would mark now. One per cycle without a victim,
/// chosen by the policy, and only if that machine is in control state ta_ctl.
std::set<std::string> victims_to_mark(const World& w);

bool lock_handler_enabled(const World& w);
void lock_handler_step(World& w, Round& round);

bool deadlock_handler_enabled(const World& w);
void deadlock_handler_step(World& w, Round& round);

bool recovery_enabled(const World& w);
void recovery_step(World& w, Round& round);

bool commit_enabled(const World& w);
void commit_step(World& w, Round& round);

bool abort_enabled(const World& w);
void abort_step(World& w, Round& round);

}  // namespace mltx
