#include "mltx/locks.hpp"

namespace mltx {

bool LockTable::holds(const std::string& machine, const LocationPath& loc, const LockMode& mode) const {
  return entries_.contains(LockEntry{loc, machine, mode});
}

LockSet LockTable::held_by(const std::string& machine) const {
  LockSet out;
  for (const auto& e : entries_) {
    if (e.machine == machine) out.emplace(e.loc, e.mode);
  }
  return out;
}

std::optional<LockRequest> LockTable::grant(const std::string& machine, const LocationPath& loc,
                                            const LockMode& mode) {
  std::optional<LockRequest> absorbed;
  if (mode.kind() == LockKind::Write && release(machine, loc, LockMode::read())) {
    absorbed = LockRequest{loc, LockMode::read()};
  }
  install(machine, loc, mode);
  return absorbed;
}

void LockTable::install(const std::string& machine, const LocationPath& loc, const LockMode& mode) {
  entries_.insert(LockEntry{loc, machine, mode});
}

bool LockTable::release(const std::string& machine, const LocationPath& loc, const LockMode& mode) {
  return entries_.erase(LockEntry{loc, machine, mode}) > 0;
}

LockSet LockTable::release_temp(const std::string& machine) {
  LockSet out;
  std::erase_if(entries_, [&](const LockEntry& e) {
    if (e.machine != machine || !e.mode.is_temp()) return false;
    out.emplace(e.loc, e.mode);
    return true;
  });
  return out;
}

LockSet LockTable::release_all(const std::string& machine) {
  LockSet out;
  std::erase_if(entries_, [&](const LockEntry& e) {
    if (e.machine != machine) return false;
    out.emplace(e.loc, e.mode);
    return true;
  });
  return out;
}

LockTable release_temp_locks(const std::string& machine, LockTable t) {
  t.release_temp(machine);
  return t;
}

LockTable unlock_all(const std::string& machine, LockTable t) {
  t.release_all(machine);
  return t;
}

LockSet new_locks(const std::string& machine, const StepFootprint& fp, const Classification& cls,
                  const LockTable& t) {
  LockSet out;
  std::set<LocationPath> w_loc;
  for (const auto& l : fp.w_loc) {
    if (cls.lock_on_write(l)) w_loc.insert(l);
  }

  for (const auto& l : fp.r_loc) {
    if (!cls.lock_on_read(l)) continue;
    if (t.holds(machine, l, LockMode::read()) || t.holds(machine, l, LockMode::write())) continue;
    // A Write requested in the same set covers the read.
    if (w_loc.contains(l) && fp.genuine_write_loc.contains(l)) continue;
    out.emplace(l, LockMode::read());
  }

  for (const auto& l : w_loc) {
    if (fp.genuine_write_loc.contains(l) && !t.holds(machine, l, LockMode::write())) {
      out.emplace(l, LockMode::write());
    }
    if (auto it = fp.partial_ops.find(l); it != fp.partial_ops.end()) {
      for (const auto& op : it->second) {
        if (!t.holds(machine, l, LockMode::op(op))) out.emplace(l, LockMode::op(op));
      }
    }
    for (const auto& a : l.ancestors()) {
      if (!t.holds(machine, a, LockMode::temp())) out.emplace(a, LockMode::temp());
    }
  }
  return out;
}

bool blocks(const std::string& holder, const LocationPath& l, const LockMode& o, const LockTable& t,
            SubsumptionMode mode) {
  for (const auto& e : t.entries()) {
    if (e.machine != holder) continue;
    if (e.loc == l && !compatible(o, e.mode)) return true;
    if (subsumes(e.loc, l)) return true;
    // A temp request is an intention on the ancestor, not an access to the
    // whole subtree, so descendant locks do not block it.
    if (mode == SubsumptionMode::Safe && !o.is_temp() && subsumes(l, e.loc) && !compatible(o, e.mode)) {
      return true;
    }
  }
  return false;
}

std::set<std::string> blockers(const std::string& requester, const LockSet& requested,
                               const std::set<std::string>& active, const LockTable& t, SubsumptionMode mode) {
  std::set<std::string> out;
  for (const auto& n : active) {
    if (n == requester) continue;
    for (const auto& [l, o] : requested) {
      if (blocks(n, l, o, t, mode)) {
        out.insert(n);
        break;
      }
    }
  }
  return out;
}

bool cannot_be_granted(const std::string& requester, const LockSet& requested, const std::set<std::string>& active,
                       const LockTable& t, SubsumptionMode mode) {
  for (const auto& n : active) {
    if (n == requester) continue;
    for (const auto& [l, o] : requested) {
      if (blocks(n, l, o, t, mode)) return true;
    }
  }
  return false;
}

GrantOutcome handle_lock_request(const std::string& requester, const LockSet& requested,
                                 const std::set<std::string>& active, LockTable& t, SubsumptionMode mode) {
  GrantOutcome out;
  out.locks = requested;
  if (cannot_be_granted(requester, requested, active, t, mode)) {
    out.reply = LockReply::Refused;
    return out;
  }
  for (const auto& [l, o] : requested) {
    if (auto absorbed = t.grant(requester, l, o)) out.absorbed.insert(*absorbed);
  }
  out.reply = LockReply::Granted;
  return out;
}

}  // namespace mltx
