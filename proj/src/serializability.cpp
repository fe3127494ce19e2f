#include "mltx/serializability.hpp"

#include <algorithm>
#include <set>

namespace mltx {

bool equivalent(const ScheduleEntry& a, const ScheduleEntry& b) {
  return a.step == b.step && a.delta == b.delta && a.gamma == b.gamma && a.reads == b.reads;
}

const std::vector<CleansingRule>& all_cleansing_rules() {
  static const std::vector<CleansingRule> rules{CleansingRule::Aborted, CleansingRule::EmptyUpdate,
                                                CleansingRule::RefusedRequest, CleansingRule::Undone};
  return rules;
}

namespace {

bool mentions(const json& e, const std::string& m) {
  if (e.contains("machine") && e["machine"] == m) return true;
  if (e.contains("machines")) {
    for (const auto& x : e["machines"]) {
      if (x == m) return true;
    }
  }
  return false;
}

bool is_fire_of(const json& e, const std::string& m) {
  return e.value("type", "") == "fire" && mentions(e, m);
}

struct Item {
  std::size_t round = 0;
  std::optional<std::uint64_t> fire_seq;
};

// Everything the deletion rules need to know about one machine's rounds.
struct MachineIndex {
  bool aborted = false;
  std::set<std::size_t> refused_rounds;
  std::set<std::uint64_t> undone_fires;
  std::set<std::size_t> undone_rounds;
};

MachineIndex index_machine(const Trace& t, const std::string& m) {
  MachineIndex ix;
  std::map<std::uint64_t, std::size_t> fire_round_by_seq;
  // Request and grant rounds awaiting the first fire they enable.
  std::vector<std::size_t> open_request;
  std::map<std::uint64_t, std::vector<std::size_t>> request_of_fire;

  for (std::size_t i = 0; i < t.rounds.size(); ++i) {
    const Round& r = t.rounds[i];
    for (const auto& e : r.events) {
      if (!mentions(e, m)) continue;
      const std::string type = e.value("type", "");
      if (type == "lock_request") {
        open_request.clear();
        open_request.push_back(i);
      } else if (type == "lock_granted") {
        open_request.push_back(i);
      } else if (type == "lock_refused") {
        ix.refused_rounds.insert(open_request.begin(), open_request.end());
        ix.refused_rounds.insert(i);
        open_request.clear();
      } else if (type == "ctl_state" && e.value("reason", "") == "refused") {
        ix.refused_rounds.insert(i);
      } else if (type == "fire") {
        auto seq = e.at("step_seq").get<std::uint64_t>();
        fire_round_by_seq[seq] = i;
        request_of_fire[seq] = open_request;
        open_request.clear();
      } else if (type == "undo") {
        auto seq = e.at("step_seq").get<std::uint64_t>();
        auto it = fire_round_by_seq.find(seq);
        if (it == fire_round_by_seq.end()) {
          throw MalformedTrace("undo of " + m + " at round " + std::to_string(r.seq) +
                               " has no matching fire (step_seq " + std::to_string(seq) + ")");
        }
        ix.undone_fires.insert(seq);
        ix.undone_rounds.insert(it->second);
        for (auto q : request_of_fire[seq]) ix.undone_rounds.insert(q);
        ix.undone_rounds.insert(i);
      } else if (type == "victimized" || type == "recovered") {
        ix.undone_rounds.insert(i);
      } else if (type == "ctl_state" &&
                 (e.value("to", "") == "wait_for_recovery" || e.value("reason", "") == "recovered")) {
        ix.undone_rounds.insert(i);
      } else if (type == "abort") {
        ix.aborted = true;
      }
    }
  }
  return ix;
}

std::vector<Item> raw_schedule(const Trace& t, const std::string& m) {
  std::vector<Item> out;
  for (std::size_t i = 0; i < t.rounds.size(); ++i) {
    const Round& r = t.rounds[i];
    Item item{i, std::nullopt};
    bool involved = r.agent == m || r.delta.contains(m) || r.gamma.contains(m) || r.reads.contains(m);
    for (const auto& e : r.events) {
      if (!mentions(e, m)) continue;
      involved = true;
      if (is_fire_of(e, m)) item.fire_seq = e.at("step_seq").get<std::uint64_t>();
    }
    if (involved) out.push_back(item);
  }
  return out;
}

void apply_rule(CleansingRule rule, std::vector<Item>& items, const MachineIndex& ix) {
  switch (rule) {
    case CleansingRule::Aborted:
      if (ix.aborted) items.clear();
      return;
    case CleansingRule::EmptyUpdate:
      std::erase_if(items, [](const Item& it) { return !it.fire_seq.has_value(); });
      return;
    case CleansingRule::RefusedRequest:
      std::erase_if(items, [&](const Item& it) { return ix.refused_rounds.contains(it.round); });
      return;
    case CleansingRule::Undone:
      std::erase_if(items, [&](const Item& it) {
        return ix.undone_rounds.contains(it.round) || (it.fire_seq && ix.undone_fires.contains(*it.fire_seq));
      });
      return;
  }
}

}  // namespace

CleansedSchedule cleanse(const Trace& t, const std::string& machine, std::span<const CleansingRule> order) {
  MachineIndex ix = index_machine(t, machine);
  std::vector<Item> items = raw_schedule(t, machine);
  for (auto rule : order) apply_rule(rule, items, ix);

  CleansedSchedule out{machine, {}};
  for (const auto& it : items) {
    const Round& r = t.rounds[it.round];
    ScheduleEntry e;
    e.seq = r.seq;
    if (it.fire_seq) {
      for (const auto& ev : r.events) {
        if (is_fire_of(ev, machine)) e.step = ev.at("steps").at(machine).get<std::size_t>();
      }
    }
    if (auto d = r.delta.find(machine); d != r.delta.end()) e.delta = d->second;
    if (auto g = r.gamma.find(machine); g != r.gamma.end()) e.gamma = g->second;
    if (auto rd = r.reads.find(machine); rd != r.reads.end()) e.reads = rd->second;
    std::sort(e.delta.begin(), e.delta.end());
    std::sort(e.gamma.begin(), e.gamma.end());
    out.entries.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> commit_order(const Trace& t) {
  std::vector<std::pair<std::uint64_t, std::string>> commits;
  for (const auto& r : t.rounds) {
    for (const auto& e : r.events) {
      if (e.value("type", "") == "commit") commits.emplace_back(r.seq, e.at("machine").get<std::string>());
    }
  }
  std::stable_sort(commits.begin(), commits.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (auto& [_, m] : commits) out.push_back(std::move(m));
  return out;
}

SerialReplay serial_replay(const Workload& wl, const std::vector<std::string>& order, std::uint64_t seed,
                           std::optional<Value> initial_root) {
  SerialReplay out;
  out.final_store = initial_root ? *initial_root : wl.initial.root_value();
  for (const auto& m : order) {
    RunOptions opts;
    opts.seed = seed;
    opts.scheduler = SchedulerKind::RoundRobin;
    opts.machines = {m};
    opts.initial_root = out.final_store;
    Trace solo = run(wl, opts);
    if (std::find(solo.footer.aborted.begin(), solo.footer.aborted.end(), m) != solo.footer.aborted.end()) {
      throw SoloAbort("machine " + m + " aborts even when run alone");
    }
    if (!solo.footer.completed) throw Error("solo run of " + m + " exceeded the round limit");
    out.schedules[m] = cleanse(solo, m);
    out.final_store = solo.footer.final_store;
  }
  return out;
}

json schedule_entry_to_json(const ScheduleEntry& e) {
  json delta = json::array();
  for (const auto& u : e.delta) delta.push_back(genuine_to_json(u));
  json gamma = json::array();
  for (const auto& u : e.gamma) gamma.push_back(partial_to_json(u));
  json reads = json::object();
  for (const auto& [p, v] : e.reads) reads[p.str()] = value_to_json(v);
  return {{"step", e.step}, {"delta", delta}, {"gamma", gamma}, {"reads", reads}};
}

json Verdict::to_json() const {
  json j = {{"serializable", serializable}, {"commit_order", commit_order}};
  if (divergence) {
    const auto& d = *divergence;
    json dj = {{"machine", d.machine}, {"position", d.position}, {"field", d.field},
               {"expected", d.expected}, {"actual", d.actual}};
    if (d.round) dj["round"] = *d.round;
    j["divergence"] = std::move(dj);
  }
  return j;
}

namespace {

std::optional<Divergence> first_divergence(const CleansedSchedule& actual, const CleansedSchedule& expected) {
  const auto& a = actual.entries;
  const auto& x = expected.entries;
  for (std::size_t i = 0; i < std::max(a.size(), x.size()); ++i) {
    Divergence d;
    d.machine = actual.machine;
    d.position = i;
    if (i >= a.size() || i >= x.size()) {
      d.field = "length";
      d.expected = i < x.size() ? schedule_entry_to_json(x[i]) : json(nullptr);
      d.actual = i < a.size() ? schedule_entry_to_json(a[i]) : json(nullptr);
      if (i < a.size()) d.round = a[i].seq;
      return d;
    }
    if (equivalent(a[i], x[i])) continue;
    json aj = schedule_entry_to_json(a[i]);
    json xj = schedule_entry_to_json(x[i]);
    for (const char* f : {"step", "reads", "delta", "gamma"}) {
      if (aj[f] != xj[f]) {
        d.field = f;
        break;
      }
    }
    d.expected = xj;
    d.actual = aj;
    d.round = a[i].seq;
    return d;
  }
  return std::nullopt;
}

}  // namespace

Verdict check_serializable(const Trace& t, const Workload& wl) {
  if (t.header.workload_digest != wl.digest) {
    throw DigestMismatch("trace was produced from workload " + t.header.workload_digest + ", not " + wl.digest);
  }
  Verdict v;
  v.commit_order = commit_order(t);
  SerialReplay serial = serial_replay(wl, v.commit_order, t.header.seed, t.header.initial_store);

  for (const auto& m : v.commit_order) {
    auto d = first_divergence(cleanse(t, m), serial.schedules.at(m));
    if (!d) continue;
    std::uint64_t key = d->round.value_or(UINT64_MAX);
    if (!v.divergence || key < v.divergence->round.value_or(UINT64_MAX)) v.divergence = std::move(d);
  }
  if (!v.divergence && t.footer.completed && t.footer.final_store != serial.final_store) {
    Divergence d;
    d.field = "final_store";
    d.expected = value_to_json(serial.final_store);
    d.actual = value_to_json(t.footer.final_store);
    v.divergence = std::move(d);
  }
  v.serializable = !v.divergence.has_value();
  return v;
}

AuditReport audit_trace(const Trace& t, const Workload& wl) {
  AuditReport rep;
  std::map<std::string, LockSet> held;
  auto fail = [&](const Round& r, const std::string& msg) {
    rep.violations.push_back("round " + std::to_string(r.seq) + ": " + msg);
  };
  auto remove_all = [&](const Round& r, const std::string& m, const LockSet& ls, const char* what) {
    for (const auto& l : ls) {
      if (held[m].erase(l) == 0) {
        fail(r, std::string(what) + " of " + m + " releases " + l.first.str() + ":" + l.second.str() + " it does not hold");
      }
    }
  };
  auto check_pairwise = [&](const Round& r) {
    std::map<LocationPath, std::vector<std::pair<std::string, LockMode>>> by_loc;
    for (const auto& [m, ls] : held) {
      for (const auto& [l, o] : ls) by_loc[l].emplace_back(m, o);
    }
    for (const auto& [l, es] : by_loc) {
      for (std::size_t i = 0; i < es.size(); ++i) {
        for (std::size_t j = i + 1; j < es.size(); ++j) {
          if (es[i].first != es[j].first && !compatible(es[i].second, es[j].second)) {
            fail(r, "incompatible locks " + es[i].second.str() + " (" + es[i].first + ") and " + es[j].second.str() +
                        " (" + es[j].first + ") on " + l.str());
          }
        }
      }
    }
  };

  for (const auto& r : t.rounds) {
    for (const auto& e : r.events) {
      const std::string type = e.value("type", "");
      if (type == "lock_granted") {
        std::string m = e.at("machine");
        for (const auto& a : lockset_from_json(e.at("absorbed"))) {
          if (held[m].erase(a) == 0) fail(r, "absorbed lock of " + m + " was not held");
        }
        for (const auto& l : lockset_from_json(e.at("locks"))) held[m].insert(l);
        check_pairwise(r);
      } else if (type == "fire") {
        for (const auto& jm : e.at("machines")) {
          std::string m = jm;
          LockSet snapshot = lockset_from_json(e.at("held").at(m));
          if (snapshot != held[m]) fail(r, "locks of " + m + " changed outside grant and release events");
          const LockSet& h = held[m];
          const Classification& cls = wl.initial.classification(m);
          auto has = [&](const LocationPath& l, const LockMode& o) { return h.contains({l, o}); };
          if (auto it = r.reads.find(m); it != r.reads.end()) {
            for (const auto& [l, _] : it->second) {
              if (cls.lock_on_read(l) && !has(l, LockMode::read()) && !has(l, LockMode::write())) {
                fail(r, m + " read " + l.str() + " without a Read or Write lock");
              }
            }
          }
          std::set<LocationPath> written;
          if (auto it = r.delta.find(m); it != r.delta.end()) {
            for (const auto& u : it->second) {
              if (!cls.lock_on_write(u.loc)) continue;
              written.insert(u.loc);
              if (!has(u.loc, LockMode::write())) fail(r, m + " wrote " + u.loc.str() + " without a Write lock");
            }
          }
          if (auto it = r.gamma.find(m); it != r.gamma.end()) {
            for (const auto& u : it->second) {
              if (!cls.lock_on_write(u.loc)) continue;
              written.insert(u.loc);
              if (!has(u.loc, LockMode::op(u.op))) {
                fail(r, m + " applied " + u.op + " to " + u.loc.str() + " without the operator lock");
              }
            }
          }
          for (const auto& l : written) {
            for (const auto& a : l.ancestors()) {
              if (!has(a, LockMode::temp())) fail(r, m + " wrote " + l.str() + " without a temp lock on " + a.str());
            }
          }
          LockSet temps;
          for (const auto& l : h) {
            if (l.second.is_temp()) temps.insert(l);
          }
          LockSet released = lockset_from_json(e.at("temp_released").at(m));
          if (released != temps) fail(r, "temp locks of " + m + " not all released by its fire");
          remove_all(r, m, released, "fire");
          for (const auto& l : held[m]) {
            if (l.second.is_temp()) fail(r, m + " keeps temp lock on " + l.first.str() + " after its fire");
          }
        }
      } else if (type == "undo") {
        std::string m = e.at("machine");
        remove_all(r, m, lockset_from_json(e.at("released")), "undo");
        for (const auto& l : lockset_from_json(e.at("reinstated"))) held[m].insert(l);
      } else if (type == "commit" || type == "abort") {
        std::string m = e.at("machine");
        LockSet released = lockset_from_json(e.at("released"));
        if (released != held[m]) fail(r, type + " of " + m + " released a different lock set than held");
        held.erase(m);
      }
    }
  }
  if (t.footer.completed) {
    for (const auto& [m, ls] : held) {
      if (!ls.empty()) rep.violations.push_back(m + " still holds locks at the end of a completed run");
    }
  }
  return rep;
}

}  // namespace mltx
