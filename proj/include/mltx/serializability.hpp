#pragma once

// Cleansed schedules, serial replay in commit order, the serializability
// verdict, and a lock-discipline audit over traces.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mltx/executor.hpp"
#include "mltx/trace.hpp"
#include "mltx/workload.hpp"

namespace mltx {

class DigestMismatch : public Error {
 public:
  using Error::Error;
};

class SoloAbort : public Error {
 public:
  using Error::Error;
};

struct ScheduleEntry {
  std::uint64_t seq = 0;  // round of the fire
  std::size_t step = 0;
  std::vector<GenuineUpdate> delta;  // sorted
  std::vector<PartialUpdate> gamma;  // sorted, as a multiset
  std::map<LocationPath, Value> reads;
};

/// Equal updates, update multisets, reads and step index. The round number is
/// not part of equivalence.
bool equivalent(const ScheduleEntry& a, const ScheduleEntry& b);

struct CleansedSchedule {
  std::string machine;
  std::vector<ScheduleEntry> entries;
};

enum class CleansingRule : std::uint8_t {
  /// Everything concerning an aborted machine.
  Aborted,
  /// Rounds where the machine contributes no update of its own.
  EmptyUpdate,
  /// Refused request, refusal and return to ta_ctl.
  RefusedRequest,
  /// Fires later undone, with their lock request and grant, and the
  /// victimization, undo and recovery rounds.
  Undone,
};

const std::vector<CleansingRule>& all_cleansing_rules();

/// The cleansed schedule of `machine`. Rules are applied in `order`; every
/// order gives the same result. Throws MalformedTrace for an undo event
/// without a matching fire.
CleansedSchedule cleanse(const Trace& t, const std::string& machine,
                         std::span<const CleansingRule> order = all_cleansing_rules());

/// Committed machines ordered by the round of their commit event.
std::vector<std::string> commit_order(const Trace& t);

struct SerialReplay {
  std::map<std::string, CleansedSchedule> schedules;
  Value final_store;
};

/// Runs each machine alone, in `order`, each from the previous final store.
SerialReplay serial_replay(const Workload& wl, const std::vector<std::string>& order, std::uint64_t seed,
                           std::optional<Value> initial_root = std::nullopt);

struct Divergence {
  std::string machine;
  std::size_t position = 0;
  std::string field;  // "step", "delta", "gamma", "reads", "length" or "final_store"
  std::optional<std::uint64_t> round;
  json expected;
  json actual;
};

struct Verdict {
  bool serializable = true;
  std::vector<std::string> commit_order;
  std::optional<Divergence> divergence;

  json to_json() const;
};

json schedule_entry_to_json(const ScheduleEntry& e);

/// Throws DigestMismatch if the trace was produced from another workload.
Verdict check_serializable(const Trace& t, const Workload& wl);

struct AuditReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Replays lock events of a trace and checks two-phase locking, temp-lock
/// lifetime, lock-before-touch and pairwise compatibility of held locks.
AuditReport audit_trace(const Trace& t, const Workload& wl);

}  // namespace mltx
