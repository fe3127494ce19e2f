#pragma once

// Lock table and lock acquisition.
//
// Locked(l, M, o) for o in {Read, Write, temp} ∪ operators. A write to a
// location additionally requests a temp lock on every strict ancestor; temp
// locks live for one fire step only.

#include <map>
#include <set>
#include <string>
#include <utility>

#include "mltx/ops.hpp"
#include "mltx/values.hpp"
#include "mltx/workload.hpp"

namespace mltx {

using LockRequest = std::pair<LocationPath, LockMode>;
using LockSet = std::set<LockRequest>;

enum class SubsumptionMode : std::uint8_t {
  /// Also blocks a request whose location subsumes a conflicting lock.
  Safe,
  /// Only locks on subsuming locations block.
  Strict,
};

struct LockEntry {
  LocationPath loc;
  std::string machine;
  LockMode mode;

  friend bool operator==(const LockEntry&, const LockEntry&) = default;
  friend auto operator<=>(const LockEntry&, const LockEntry&) = default;
};

class LockTable {
 public:
  bool holds(const std::string& machine, const LocationPath& loc, const LockMode& mode) const;
  LockSet held_by(const std::string& machine) const;
  bool empty() const noexcept { return entries_.empty(); }
  const std::set<LockEntry>& entries() const noexcept { return entries_; }

  /// Installs the lock. Granting Write drops the machine's own Read on the
  /// same location; the dropped lock is returned so it can be restored.
  std::optional<LockRequest> grant(const std::string& machine, const LocationPath& loc, const LockMode& mode);
  void install(const std::string& machine, const LocationPath& loc, const LockMode& mode);
  /// No-op if not held.
  bool release(const std::string& machine, const LocationPath& loc, const LockMode& mode);

  LockSet release_temp(const std::string& machine);
  LockSet release_all(const std::string& machine);

  friend bool operator==(const LockTable&, const LockTable&) = default;

 private:
  std::set<LockEntry> entries_;
};

LockTable release_temp_locks(const std::string& machine, LockTable t);
LockTable unlock_all(const std::string& machine, LockTable t);

/// Locks `machine` still needs for a step with footprint `fp`.
LockSet new_locks(const std::string& machine, const StepFootprint& fp, const Classification& cls,
                  const LockTable& t);

/// Whether machine `holder`'s locks block a request (l, o) by another machine.
bool blocks(const std::string& holder, const LocationPath& l, const LockMode& o, const LockTable& t,
            SubsumptionMode mode);

/// Some lock in `requested` is blocked by a machine in `active` other than `requester`.
bool cannot_be_granted(const std::string& requester, const LockSet& requested, const std::set<std::string>& active,
                       const LockTable& t, SubsumptionMode mode);

/// The machines in `active` (other than `requester`) blocking some lock in `requested`.
std::set<std::string> blockers(const std::string& requester, const LockSet& requested,
                               const std::set<std::string>& active, const LockTable& t, SubsumptionMode mode);

enum class LockReply : std::uint8_t { None, Granted, Refused };

struct GrantOutcome {
  LockReply reply = LockReply::None;
  LockSet locks;     // requested set
  LockSet absorbed;  // own Read locks replaced by Write
};

/// All-or-nothing: grants every lock in `requested` or none.
GrantOutcome handle_lock_request(const std::string& requester, const LockSet& requested,
                                 const std::set<std::string>& active, LockTable& t, SubsumptionMode mode);

}  // namespace mltx
