#include <doctest.h>

#include "mltx/executor.hpp"
#include "mltx/generator.hpp"
#include "mltx/serializability.hpp"
#include "support.hpp"

using namespace mltx;
using mltx::test::events_of;
using mltx::test::P;

namespace {

std::string add_workload(int machines) {
  std::string text = "init /x = 0\n";
  for (int i = 1; i <= machines; ++i) {
    text += "machine M" + std::to_string(i) + "\n  shared /x\n  step:\n    partial /x add 1\n";
  }
  return text;
}

void activate_all(Simulator& sim, std::initializer_list<const char*> agents) {
  for (const char* a : agents) sim.activate(a);
}

}  // namespace

TEST_CASE("golden trace of a single one-step machine") {
  const std::string src = "init /x = 0\nmachine M\n  step:\n    write /x := 1\n";
  Workload wl = parse_workload(src);
  RunOptions opts;
  opts.seed = 1;
  std::string expected =
      "{\"initial_store\":{\"x\":0},\"kind\":\"header\",\"machines\":[\"M\"],\"max_rounds\":100,\"scheduler\":\"rr\","
      "\"seed\":1,\"stagger\":false,\"strict_subsumption\":false,\"suspend\":false,\"victim_policy\":\"greatest-id\","
      "\"workload_digest\":\"" + sha256_hex(src) + "\"}\n"
      "{\"agent\":\"TaCtl\",\"ctl\":[],\"delta\":{},\"events\":[{\"machine\":\"M\",\"type\":\"register\"}],"
      "\"gamma\":{},\"reads\":{},\"seq\":0}\n"
      "{\"agent\":\"M\",\"ctl\":[],\"delta\":{\"M\":[[\"genuine\",\"/x\",1]]},\"events\":[{\"held\":{\"M\":[]},"
      "\"machines\":[\"M\"],\"result\":[[\"genuine\",\"/x\",1]],\"step_seq\":1,\"steps\":{\"M\":0},"
      "\"temp_released\":{\"M\":[]},\"type\":\"fire\"}],\"gamma\":{\"M\":[]},\"reads\":{\"M\":{}},\"seq\":1}\n"
      "{\"agent\":\"M\",\"ctl\":[],\"delta\":{},\"events\":[{\"machine\":\"M\",\"type\":\"commit_request\"}],"
      "\"gamma\":{},\"reads\":{},\"seq\":2}\n"
      "{\"agent\":\"Commit\",\"ctl\":[],\"delta\":{},\"events\":[{\"machine\":\"M\",\"released\":[],\"type\":\"commit\"},"
      "{\"from\":\"ta_ctl\",\"machine\":\"M\",\"to\":\"committed\",\"type\":\"ctl_state\"}],\"gamma\":{},\"reads\":{},"
      "\"seq\":3}\n"
      "{\"aborted\":[],\"committed\":[\"M\"],\"completed\":true,\"final_store\":{\"x\":1},\"kind\":\"end\","
      "\"round_limit_exceeded\":false,\"rounds\":4}\n";
  CHECK(to_jsonl(run(wl, opts)) == expected);
}

TEST_CASE("an empty workload ends immediately") {
  Workload wl = parse_workload("");
  Trace t = run(wl, RunOptions{});
  CHECK(t.rounds.empty());
  CHECK(t.footer.completed);
  CHECK(t.footer.rounds == 0);
}

TEST_CASE("a zero-step machine commits without firing") {
  Workload wl = parse_workload("machine E\n");
  Trace t = run(wl, RunOptions{});
  CHECK(t.footer.committed == std::vector<std::string>{"E"});
  CHECK(events_of(t, "fire").empty());
}

TEST_CASE("seven compatible partials fire as one partner group") {
  Workload wl = parse_workload(add_workload(7));
  Simulator sim(wl, RunOptions{});
  for (int i = 1; i <= 7; ++i) sim.activate("M" + std::to_string(i));
  for (int i = 1; i <= 7; ++i) sim.activate("LockHandler");
  CHECK(partners(sim.world(), "M1").size() == 7);
  sim.activate("M4");
  const World& w = sim.world();
  CHECK(eval(P("/x"), w.store) == Value(7));
  auto fires = events_of(sim.trace(), "fire");
  REQUIRE(fires.size() == 1);
  CHECK(fires[0]["machines"].size() == 7);
  CHECK(fires[0]["result"] == json::array({json::array({"genuine", "/x", 7})}));
  for (int i = 1; i <= 7; ++i) {
    const auto& h = w.ctl.histories.at("M" + std::to_string(i));
    REQUIRE(h.size() == 1);
    REQUIRE(h[0].partial_inverses.size() == 1);
    CHECK(h[0].partial_inverses[0].second == InversePair{"add", Value(-1)});
  }
  while (sim.step()) {
  }
  Trace t = sim.finish();
  CHECK(t.footer.committed.size() == 7);
  CHECK(check_serializable(t, wl).serializable);
}

TEST_CASE("partner groups close transitively over shared update locations") {
  Workload wl = parse_workload(
      "init /x = 0\ninit /y = 0\n"
      "machine M\n  shared /x\n  step:\n    partial /x add 1\n"
      "machine N\n  shared /x /y\n  step:\n    partial /x add 2\n    partial /y add 2\n"
      "machine P\n  shared /y\n  step:\n    partial /y add 3\n"
      "machine Q\n  shared /y\n  step:\n    partial /y add 4\n");
  Simulator sim(wl, RunOptions{});
  activate_all(sim, {"M", "N", "P", "LockHandler", "LockHandler", "LockHandler"});
  CHECK(partners(sim.world(), "M") == std::set<std::string>{"M", "N", "P"});
  // The initiator is always a member, so Q's group reaches M through P and N.
  CHECK(partners(sim.world(), "Q") == std::set<std::string>{"M", "N", "P", "Q"});
  sim.activate("M");
  CHECK(eval(P("/x"), sim.world().store) == Value(3));
  CHECK(eval(P("/y"), sim.world().store) == Value(5));
}

TEST_CASE("a machine whose own step clashes requests abort") {
  Workload wl = parse_workload("init /x = 0\nmachine M\n  step:\n    write /x := 1\n    write /x := 2\n");
  Simulator sim(wl, RunOptions{});
  sim.activate("M");
  CHECK(sim.world().ctl.abort_requests.contains("M"));
  Trace t = sim.run();
  CHECK(t.footer.aborted == std::vector<std::string>{"M"});
  CHECK(t.footer.final_store == Value(wl.initial.root()));
}

TEST_CASE("an inconsistent partner group aborts every member and leaves the store") {
  Workload wl = parse_workload(
      "init /x = 0\n"
      "machine M\n  shared /x\n  step:\n    write /x := 1\n"
      "machine N\n  shared /x\n  step:\n    write /x := 2\n");
  Simulator sim(wl, RunOptions{});
  World& w = sim.world();
  std::map<std::string, StepIntent> intents{{"M", w.current_intent("M")}, {"N", w.current_intent("N")}};
  Round r;
  fire(w, intents, r);
  CHECK(w.store == wl.initial);
  CHECK(w.ctl.abort_requests == std::set<std::string>{"M", "N"});
  CHECK(r.events[0]["type"] == "fire_failed");
}

TEST_CASE("a lock request is granted in a later round than it is made") {
  Workload wl = parse_workload(add_workload(1));
  Trace t = run(wl, RunOptions{});
  CHECK(mltx::test::first_round(t, "lock_request", "M1") < mltx::test::first_round(t, "lock_granted", "M1"));
}

TEST_CASE("safe and strict subsumption diverge on a descendant read lock") {
  const char* src =
      "init /p = {r: 0}\ninit /n = {a: 0, b: 0}\n"
      "machine M\n  shared /p\n  step:\n    write /p := {r: 5}\n"
      "machine N\n  shared /p\n"
      "  step:\n    read /p/r\n    write /n/a := read(/p/r)\n"
      "  step:\n    read /p/r\n    write /n/b := read(/p/r)\n";
  Workload wl = parse_workload(src);
  auto script = [&](SubsumptionMode mode) {
    RunOptions opts;
    opts.subsumption = mode;
    auto sim = std::make_unique<Simulator>(wl, opts);
    activate_all(*sim, {"N", "LockHandler", "N", "M", "LockHandler"});
    return sim;
  };

  auto safe = script(SubsumptionMode::Safe);
  CHECK(events_of(safe->trace(), "lock_refused").size() == 1);
  while (safe->step()) {
  }
  Trace st = safe->finish();
  CHECK(st.footer.completed);
  CHECK(check_serializable(st, wl).serializable);

  auto strict = script(SubsumptionMode::Strict);
  CHECK(events_of(strict->trace(), "lock_refused").empty());
  // M overwrites the page between N's two reads of one of its records.
  activate_all(*strict, {"M", "M", "Commit", "N", "N", "Commit"});
  Trace tt = strict->finish();
  CHECK(tt.footer.completed);
  CHECK(tt.footer.final_store == parse_value("{n: {a: 0, b: 5}, p: {r: 5}}"));
  Verdict v = check_serializable(tt, wl);
  CHECK_FALSE(v.serializable);
  REQUIRE(v.divergence.has_value());
  CHECK(v.divergence->machine == "N");
}

TEST_CASE("runs are deterministic per seed and scheduler") {
  GeneratorConfig cfg;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Workload wl = parse_workload(generate_workload(cfg, seed));
    for (auto sched : {SchedulerKind::RoundRobin, SchedulerKind::Random}) {
      RunOptions opts;
      opts.seed = seed;
      opts.scheduler = sched;
      CHECK(to_jsonl(run(wl, opts)) == to_jsonl(run(wl, opts)));
    }
  }
}

TEST_CASE("round limit is flagged in the footer") {
  Workload wl = parse_workload(cross_lock_workload(1));
  RunOptions opts;
  opts.max_rounds = 3;
  Trace t = run(wl, opts);
  CHECK(t.footer.round_limit_exceeded);
  CHECK_FALSE(t.footer.completed);
  CHECK(t.header.max_rounds == 3);
  CHECK(default_max_rounds(wl) == 400);
  CHECK(default_max_rounds(parse_workload("")) == 100);
}

TEST_CASE("stagger and suspend runs complete and check") {
  Workload wl = parse_workload(cross_lock_workload(3));
  for (bool stagger : {false, true}) {
    for (bool suspend : {false, true}) {
      for (auto sched : {SchedulerKind::RoundRobin, SchedulerKind::Random}) {
        RunOptions opts;
        opts.seed = 9;
        opts.stagger = stagger;
        opts.suspend = suspend;
        opts.scheduler = sched;
        Trace t = run(wl, opts);
        CHECK(t.footer.completed);
        CHECK(events_of(t, "register").size() == 2);
        CHECK(check_serializable(t, wl).serializable);
        CHECK(audit_trace(t, wl).ok());
      }
    }
  }
}

TEST_CASE("activating a disabled agent is a logic error") {
  Workload wl = parse_workload(add_workload(1));
  Simulator sim(wl, RunOptions{});
  CHECK_THROWS_AS(sim.activate("Commit"), std::logic_error);
  CHECK_THROWS_AS(sim.activate("TaCtl"), std::logic_error);
  CHECK(sim.enabled_agents() == std::vector<std::string>{"M1"});
}

TEST_CASE("schedulers parse and print") {
  CHECK(parse_scheduler("rr") == SchedulerKind::RoundRobin);
  CHECK(std::string(to_string(parse_scheduler("random"))) == "random");
  CHECK_THROWS_AS(parse_scheduler("fifo"), Error);
}
