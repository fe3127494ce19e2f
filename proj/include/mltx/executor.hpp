#pragma once

// The per-machine control-state automaton, partner-group firing and the
// round-based simulator. One agent is activated per round; a fire round moves
// the whole partner group at once.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mltx/controller.hpp"
#include "mltx/trace.hpp"
#include "mltx/workload.hpp"

namespace mltx {

enum class SchedulerKind : std::uint8_t { RoundRobin, Random };

const char* to_string(SchedulerKind k) noexcept;
/// "rr" or "random"; throws Error otherwise.
SchedulerKind parse_scheduler(const std::string& name);

struct RunOptions {
  std::uint64_t seed = 0;
  SchedulerKind scheduler = SchedulerKind::RoundRobin;
  SubsumptionMode subsumption = SubsumptionMode::Safe;
  /// Skip machines whose lock request would be refused.
  bool suspend = false;
  /// Machines join at seeded rounds instead of all at round 0.
  bool stagger = false;
  VictimPolicy victim_policy = VictimPolicy::GreatestId;
  /// 0 selects the default, max(100 * total steps, 100).
  std::uint64_t max_rounds = 0;
  /// Only these machines take part (all when empty).
  std::vector<std::string> machines;
  /// Starting store contents in place of the workload's initial store.
  std::optional<Value> initial_root;
};

std::uint64_t default_max_rounds(const Workload& wl);

/// Names of the controller agents in round-robin order, after the machines.
const std::vector<std::string>& component_agents();
inline constexpr const char* kRegistrationAgent = "TaCtl";

/// Machines that would fire together with `m` now: the closure over ready
/// machines sharing an updated location with a member. Always contains `m`.
std::set<std::string> partners(const World& w, const std::string& m);

/// Whether the machine is at its fire point: granted, or needing no locks.
bool ready_to_fire(const World& w, const std::string& m);

/// One activation of machine `m` (Fig. 1 automaton).
void machine_step(World& w, const std::string& m, Round& round);

/// Fires `group` atomically. `intents` holds each member's evaluated step.
void fire(World& w, const std::map<std::string, StepIntent>& intents, Round& round);

class Simulator {
 public:
  Simulator(const Workload& wl, RunOptions opts);

  const World& world() const noexcept { return world_; }
  World& world() noexcept { return world_; }
  const Trace& trace() const noexcept { return trace_; }
  const RunOptions& options() const noexcept { return opts_; }

  /// All agents in round-robin order.
  const std::vector<std::string>& agents() const noexcept { return agents_; }
  std::vector<std::string> enabled_agents() const;
  bool is_enabled(const std::string& agent) const;

  /// Every participating machine joined and left TransAct.
  bool finished() const;
  bool round_limit_reached() const;
  std::uint64_t next_seq() const noexcept { return next_seq_; }

  /// Runs one round activating `agent`. Throws std::logic_error if not enabled.
  void activate(const std::string& agent);
  /// Picks the next agent by the configured scheduler and runs it. Returns
  /// false when finished or stuck.
  bool step();
  /// Runs to completion or the round limit and returns the trace.
  Trace run();
  /// Seals the trace footer from the current state.
  Trace finish();

 private:
  void register_due(Round& round, bool force);
  bool registration_due() const;

  const Workload* workload_;
  RunOptions opts_;
  World world_;
  Trace trace_;
  std::vector<std::string> participants_;
  std::vector<std::string> agents_;
  std::size_t rr_next_ = 0;
  Rng rng_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t max_rounds_ = 0;
};

Trace run(const Workload& wl, const RunOptions& opts);

}  // namespace mltx
