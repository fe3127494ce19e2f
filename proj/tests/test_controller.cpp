#include <doctest.h>

#include "mltx/controller.hpp"
#include "support.hpp"

using namespace mltx;
using mltx::test::P;

namespace {

const LockMode W = LockMode::write();
const LockMode R = LockMode::read();
const LockMode T = LockMode::temp();

// Machines named in `order`, each writing its first then its second location.
std::string ring_workload(const std::vector<std::pair<std::string, std::pair<std::string, std::string>>>& order) {
  std::string text = "init /x = 0\ninit /y = 0\ninit /z = 0\n";
  for (const auto& [m, locs] : order) {
    text += "machine " + m + "\n  shared /x /y /z\n";
    text += "  step:\n    write /" + locs.first + " := 1\n";
    text += "  step:\n    write /" + locs.second + " := 1\n";
  }
  return text;
}

// Every machine joined, at step 1 and holding the Write from step 0.
World mid_ring(const Workload& wl) {
  World w(wl, 0, SubsumptionMode::Safe);
  for (const auto& p : wl.programs) {
    w.ctl.trans_act.insert(p.machine_id);
    w.machines.at(p.machine_id).joined = true;
    w.machines.at(p.machine_id).pc = 1;
    w.locks.install(p.machine_id, p.steps[0].writes[0].target, W);
  }
  return w;
}

}  // namespace

TEST_CASE("recovery_upd records prior values and inverse pairs") {
  Store pre = mltx::test::store_of("{x: 1, y: 2}");
  StepIntent genuine;
  genuine.genuine = {{P("/y"), 5}};
  genuine.genuine_write_loc = {P("/y")};
  auto a = recovery_upd(genuine, pre);
  CHECK(a.genuine_restores == std::vector<GenuineUpdate>{{P("/y"), 2}});
  CHECK(a.partial_inverses.empty());

  StepIntent partial;
  partial.partial = {{P("/x"), "add", 3}};
  auto b = recovery_upd(partial, pre);
  CHECK(b.genuine_restores.empty());
  REQUIRE(b.partial_inverses.size() == 1);
  CHECK(b.partial_inverses[0].first == P("/x"));
  CHECK(b.partial_inverses[0].second == InversePair{"add", Value(-3)});
}

TEST_CASE("undo applies inverses to current values and releases the entry's locks") {
  Workload wl = parse_workload(
      "init /x = 10\ninit /y = 9\ninit /p = {r: 0}\n"
      "machine M\n  shared /x /y /p\n  step:\n    write /y := 9\n");
  World w(wl, 0, SubsumptionMode::Safe);
  w.ctl.trans_act.insert("M");
  w.locks.install("M", P("/y"), W);
  w.locks.install("M", P("/x"), LockMode::op("add"));
  HistoryEntry e;
  e.genuine_restores = {{P("/y"), 2}};
  e.partial_inverses = {{P("/x"), InversePair{"add", Value(-3)}}};
  e.acquired_locks = {{P("/y"), W}, {P("/x"), LockMode::op("add")}, {P("/p"), T}};
  e.absorbed_reads = {{P("/y"), R}};
  e.pc = 0;
  e.step_seq = 4;
  w.ctl.histories["M"].push_back(e);
  w.machines.at("M").pc = 1;

  Round r;
  undo(w, "M", r);
  CHECK(eval(P("/y"), w.store) == Value(2));
  CHECK(eval(P("/x"), w.store) == Value(7));
  CHECK(w.locks.held_by("M") == LockSet{{P("/y"), R}});
  CHECK(w.ctl.histories["M"].empty());
  CHECK(w.machines.at("M").pc == 0);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0]["type"] == "undo");
  CHECK(r.events[0]["step_seq"] == 4);
  CHECK(r.events[0]["released"].size() == 2);
}

TEST_CASE("undoing one partner's partial keeps the other's contribution") {
  Workload wl = parse_workload(
      "init /x = 0\n"
      "machine M\n  shared /x\n  step:\n    partial /x add 3\n"
      "machine N\n  shared /x\n  step:\n    partial /x add 5\n");
  World w(wl, 0, SubsumptionMode::Safe);
  w.store.assign(P("/x"), 8);
  HistoryEntry m;
  m.partial_inverses = {{P("/x"), inverse_op("add", 3)}};
  w.ctl.histories["M"].push_back(m);
  Round r;
  undo(w, "M", r);
  CHECK(eval(P("/x"), w.store) == Value(5));
}

TEST_CASE("undo round-trip restores the store exactly") {
  Workload wl = parse_workload(
      "init /a = {b: 4, c: \"s\"}\ninit /n = 6\n"
      "machine M\n  shared /a /n\n"
      "  step:\n    read /n\n    write /a/b := read(/n) * 3\n    partial /a/c append \"tail\"\n    partial /n xor 5\n");
  World w(wl, 0, SubsumptionMode::Safe);
  Store before = w.store;
  StepIntent intent = w.current_intent("M");
  auto rec = recovery_upd(intent, w.store);
  auto agg = aggregate(w.store, intent.genuine, intent.partial);
  REQUIRE(agg.consistent());
  apply_updates(w.store, agg.updates);
  CHECK_FALSE(w.store == before);
  w.ctl.histories["M"].push_back(HistoryEntry{rec.genuine_restores, rec.partial_inverses, {}, {}, 0, 1});
  Round r;
  undo(w, "M", r);
  CHECK(w.store == before);
}

TEST_CASE("a two-machine cross wait is a deadlock; the greatest id is the victim") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}, {"M2", {"y", "x"}}}));
  World w = mid_ring(wl);
  auto g = wait_graph(w);
  CHECK(g["M1"] == std::set<std::string>{"M2"});
  CHECK(g["M2"] == std::set<std::string>{"M1"});
  CHECK(deadlocked(w) == std::set<std::string>{"M1", "M2"});
  CHECK(wait_cycles(w) == std::vector<std::vector<std::string>>{{"M1", "M2"}});
  CHECK(victims_to_mark(w) == std::set<std::string>{"M2"});

  w.victim_policy = VictimPolicy::LeastVictimized;
  w.ctl.victim_counts["M2"] = 1;
  CHECK(victims_to_mark(w) == std::set<std::string>{"M1"});
}

TEST_CASE("a three-cycle gets exactly one victim") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}, {"M2", {"y", "z"}}, {"M3", {"z", "x"}}}));
  World w = mid_ring(wl);
  CHECK(deadlocked(w) == std::set<std::string>{"M1", "M2", "M3"});
  CHECK(victims_to_mark(w) == std::set<std::string>{"M3"});
  Round r;
  deadlock_handler_step(w, r);
  CHECK(w.ctl.victims == std::set<std::string>{"M3"});
  CHECK(w.ctl.victim_counts["M3"] == 1);
  CHECK_FALSE(deadlock_handler_enabled(w));
}

TEST_CASE("no waits means no deadlock") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}, {"M2", {"z", "z"}}}));
  World w(wl, 0, SubsumptionMode::Safe);
  w.ctl.trans_act = {"M1", "M2"};
  CHECK(deadlocked(w).empty());
  CHECK_FALSE(deadlock_handler_enabled(w));
}

TEST_CASE("machines waiting for locks are not victimized") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}, {"M2", {"y", "x"}}}));
  World w = mid_ring(wl);
  w.machines.at("M2").state = CtlState::WaitForLocks;
  CHECK(deadlocked(w).size() == 2);
  CHECK(victims_to_mark(w).empty());
}

TEST_CASE("recovery undoes while deadlocked and unmarks once free") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}, {"M2", {"y", "x"}}}));
  World w = mid_ring(wl);
  w.ctl.victims.insert("M2");
  // Two entries: the Write on /y is acquired by the younger one.
  w.ctl.histories["M2"].push_back(HistoryEntry{{}, {}, {}, {}, 0, 1});
  w.ctl.histories["M2"].push_back(HistoryEntry{{{P("/y"), 0}}, {}, {{P("/y"), W}}, {}, 0, 2});
  Round r1;
  recovery_step(w, r1);
  CHECK(w.ctl.histories["M2"].size() == 1);
  CHECK(w.ctl.victims.contains("M2"));
  CHECK(deadlocked(w).empty());
  Round r2;
  recovery_step(w, r2);
  CHECK(w.ctl.victims.empty());
  CHECK(w.ctl.histories["M2"].size() == 1);
  CHECK(r2.events[0]["type"] == "recovered");
}

TEST_CASE("a victim with an empty history is unmarked") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}}));
  World w(wl, 0, SubsumptionMode::Safe);
  w.ctl.trans_act.insert("M1");
  w.ctl.victims.insert("M1");
  Round r;
  recovery_step(w, r);
  CHECK(w.ctl.victims.empty());
}

TEST_CASE("commit releases every lock and picks the least id") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}, {"M2", {"z", "z"}}}));
  World w(wl, 0, SubsumptionMode::Safe);
  w.ctl.trans_act = {"M1", "M2"};
  for (const char* l : {"/x", "/y"}) w.locks.install("M1", P(l), W);
  w.locks.install("M1", P("/z"), R);
  w.locks.install("M1", P("/x"), T);
  w.locks.install("M2", P("/z"), R);
  Round a;
  call_commit(w, "M2", a);
  call_commit(w, "M1", a);
  CHECK_FALSE(w.is_running("M1"));
  Round r;
  commit_step(w, r);
  CHECK(w.locks.held_by("M1").empty());
  CHECK(w.locks.held_by("M2").size() == 1);
  CHECK(w.machines.at("M1").state == CtlState::Committed);
  CHECK(w.ctl.commit_requests == std::set<std::string>{"M2"});
  CHECK(r.events[0]["released"].size() == 4);

  World idle(wl, 0, SubsumptionMode::Safe);
  Round n;
  commit_step(idle, n);
  CHECK(n.events.empty());
}

TEST_CASE("abort undoes the whole history and releases residual locks") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}}));
  World w(wl, 0, SubsumptionMode::Safe);
  w.ctl.trans_act.insert("M1");
  w.store.assign(P("/x"), 1);
  w.store.assign(P("/y"), 1);
  w.ctl.histories["M1"].push_back(HistoryEntry{{{P("/x"), 0}}, {}, {{P("/x"), W}}, {}, 0, 3});
  w.ctl.histories["M1"].push_back(HistoryEntry{{{P("/y"), 0}}, {}, {{P("/y"), W}}, {}, 1, 7});
  w.locks.install("M1", P("/x"), W);
  w.locks.install("M1", P("/y"), W);
  w.locks.install("M1", P("/z"), W);  // granted for a step that never fired
  Round a;
  call_abort(w, "M1", "test", a);
  Round r;
  abort_step(w, r);
  CHECK(w.store == wl.initial);
  CHECK(w.locks.empty());
  CHECK(w.ctl.histories["M1"].empty());
  CHECK_FALSE(w.ctl.trans_act.contains("M1"));
  CHECK(w.machines.at("M1").state == CtlState::Aborted);
  const json& e = r.events[2];
  CHECK(e["type"] == "abort");
  CHECK(e["undone"] == json::array({7, 3}));
  CHECK(e["released"] == json::array({json::array({"/z", "Write"})}));
}

TEST_CASE("abort before the first fire only deregisters and releases") {
  Workload wl = parse_workload(ring_workload({{"M1", {"x", "y"}}}));
  World w(wl, 0, SubsumptionMode::Safe);
  w.ctl.trans_act.insert("M1");
  w.locks.install("M1", P("/x"), W);
  Round a;
  call_abort(w, "M1", "test", a);
  Round r;
  abort_step(w, r);
  CHECK(w.locks.empty());
  CHECK(w.store == wl.initial);
  CHECK(w.ctl.trans_act.empty());
}

TEST_CASE("victim policies parse and print") {
  CHECK(parse_victim_policy("greatest-id") == VictimPolicy::GreatestId);
  CHECK(std::string(to_string(parse_victim_policy("least-victimized"))) == "least-victimized");
  CHECK_THROWS_AS(parse_victim_policy("random"), Error);
}
