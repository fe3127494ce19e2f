// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "mltx/executor.hpp"
#include "mltx/fuzz.hpp"
#include "mltx/generator.hpp"
#include "mltx/ops.hpp"
#include "mltx/serializability.hpp"
#include "mltx/trace.hpp"

using namespace mltx;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fs", secs);
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << " (" << buf << ")"
            << std::endl;
}

std::vector<std::string> requestable_ops() {
  std::vector<std::string> out;
  for (const auto& n : OperatorRegistry::builtin().names()) {
    if (OperatorRegistry::builtin().requestable(n)) out.push_back(n);
  }
  return out;
}

bool has_prefix(const std::vector<std::string>& problems, const std::string& prefix) {
  return std::any_of(problems.begin(), problems.end(), [&](const std::string& p) { return p.starts_with(prefix); });
}

// The default fuzz corpus, shared by the theorem and audit criteria.
const FuzzSummary& corpus() {
  static const FuzzSummary s = [] {
    FuzzConfig cfg;
    cfg.runs = 500;
    cfg.base_seed = 1;
    cfg.keep_going = true;
    return run_fuzz(cfg);
  }();
  return s;
}

Outcome fuzz_theorem() {
  const FuzzSummary& s = corpus();
  std::uint64_t bad = 0;
  for (const auto& f : s.failures) {
    if (has_prefix(f.problems, "not serializable") || has_prefix(f.problems, "error")) ++bad;
  }
  std::ostringstream d;
  d << s.runs << " runs, " << s.completed << " completed, " << s.round_limited << " round-limited, " << bad
    << " not serializable, " << s.deadlock_runs << " with deadlocks, " << s.seconds << "s";
  return {s.runs == 500 && bad == 0 && s.seconds < 60.0, d.str()};
}

Outcome aggregation_fidelity() {
  std::string text = "init /x = 0\n";
  for (int i = 1; i <= 7; ++i) text += "machine M" + std::to_string(i) + "\n  shared /x\n  step:\n    partial /x add 1\n";
  Workload wl = parse_workload(text);
  Simulator sim(wl, RunOptions{});
  for (int i = 1; i <= 7; ++i) sim.activate("M" + std::to_string(i));
  for (int i = 1; i <= 7; ++i) sim.activate("LockHandler");
  sim.activate("M1");
  const World& w = sim.world();
  std::size_t fires = 0, members = 0;
  for (const auto& r : sim.trace().rounds) {
    for (const auto& e : r.events) {
      if (e["type"] == "fire") {
        ++fires;
        members = e["machines"].size();
      }
    }
  }
  std::size_t good = 0;
  for (int i = 1; i <= 7; ++i) {
    const auto& h = w.ctl.histories.at("M" + std::to_string(i));
    if (h.size() == 1 && h[0].partial_inverses.size() == 1 &&
        h[0].partial_inverses[0].second == InversePair{"add", Value(-1)}) {
      ++good;
    }
  }
  Value x = eval(LocationPath::parse("/x"), w.store);
  std::ostringstream d;
  d << "fire rounds " << fires << ", group size " << members << ", x = " << to_literal(x) << ", " << good
    << "/7 histories hold (add, -1)";
  return {fires == 1 && members == 7 && x == Value(7) && good == 7, d.str()};
}

Outcome postulate() {
  const auto& reg = OperatorRegistry::builtin();
  Rng rng(2024);
  std::size_t checked = 0, failed = 0;
  auto ops = requestable_ops();
  for (const auto& op : ops) {
    for (int i = 0; i < 1000; ++i) {
      Value w = reg.sample_base(op, rng), v = reg.sample_arg(op, rng);
      InversePair inv = inverse_op(op, v);
      ++checked;
      if (apply_op(inv.op, apply_op(op, w, v), inv.arg) != w) ++failed;
    }
  }
  std::ostringstream d;
  d << ops.size() << " operators, " << checked << " pairs, " << failed << " failures";
  return {failed == 0 && checked == 1000 * ops.size(), d.str()};
}

Outcome undo_commutativity() {
  const auto& reg = OperatorRegistry::builtin();
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& a : requestable_ops()) {
    for (const auto& b : requestable_ops()) {
      if (reg.compatible(a, b)) pairs.emplace_back(a, b);
    }
  }
  Rng rng(77);
  std::size_t failed = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& [a, b] = pairs[below(rng, pairs.size())];
    Value w = reg.sample_base(a, rng), v1 = reg.sample_arg(a, rng), v2 = reg.sample_arg(b, rng);
    Value both = apply_op(b, apply_op(a, w, v1), v2);
    InversePair i1 = inverse_op(a, v1), i2 = inverse_op(b, v2);
    Value x = apply_op(i1.op, apply_op(i2.op, both, i2.arg), i1.arg);
    Value y = apply_op(i2.op, apply_op(i1.op, both, i1.arg), i2.arg);
    if (x != w || y != w) ++failed;
  }
  std::ostringstream d;
  d << "1000 pairs over " << pairs.size() << " compatible operator pairs, " << failed << " failures";
  return {failed == 0, d.str()};
}

Outcome permutations() {
  const auto& reg = OperatorRegistry::builtin();
  // Every multiset whose operators are pairwise declared compatible.
  std::vector<std::vector<std::string>> families;
  for (const auto& a : requestable_ops()) {
    std::vector<std::string> fam;
    for (const auto& b : requestable_ops()) {
      if (reg.compatible(a, b)) fam.push_back(b);
    }
    if (!fam.empty()) families.push_back(fam);
  }
  Rng rng(5);
  std::size_t multisets = 0, failed = 0;
  for (const auto& fam : families) {
    for (std::size_t size = 1; size <= 4; ++size) {
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<std::string, Value>> parts;
        for (std::size_t k = 0; k < size; ++k) {
          const auto& op = fam[below(rng, fam.size())];
          parts.emplace_back(op, reg.sample_arg(op, rng));
        }
        Value w = reg.sample_base(fam[0], rng);
        std::vector<std::size_t> idx(size);
        std::iota(idx.begin(), idx.end(), 0);
        std::optional<Value> first;
        ++multisets;
        do {
          Value acc = w;
          for (auto k : idx) acc = apply_op(parts[k].first, acc, parts[k].second);
          if (!first) first = acc;
          if (acc != *first) {
            ++failed;
            break;
          }
        } while (std::next_permutation(idx.begin(), idx.end()));
      }
    }
  }
  std::ostringstream d;
  d << multisets << " multisets of size 1-4 over " << families.size() << " compatible families, " << failed
    << " disagreements";
  return {failed == 0, d.str()};
}

Outcome deadlock_scenario() {
  std::ostringstream d;
  bool ok = true;
  for (auto policy : {VictimPolicy::GreatestId, VictimPolicy::LeastVictimized}) {
    Workload wl = parse_workload(cross_lock_workload(1));
    RunOptions opts;
    opts.victim_policy = policy;
    Trace t = run(wl, opts);
    std::optional<std::uint64_t> first_dl;
    std::set<std::string> victims;
    std::set<std::string> dl;
    for (const auto& r : t.rounds) {
      for (const auto& e : r.events) {
        if (e["type"] != "victimized") continue;
        victims.insert(e["machine"].get<std::string>());
        if (!first_dl) {
          first_dl = r.seq;
          dl = e["deadlocked"].get<std::set<std::string>>();
        }
      }
    }
    Verdict v = check_serializable(t, wl);
    bool good = first_dl && *first_dl <= 20 && dl == std::set<std::string>{"M1", "M2"} && victims.size() == 1 &&
                t.footer.committed.size() == 2 && v.serializable;
    ok = ok && good;
    d << to_string(policy) << ": deadlock at round " << (first_dl ? std::to_string(*first_dl) : "none")
      << ", victims {";
    for (const auto& m : victims) d << m << (m == *victims.rbegin() ? "" : ",");
    d << "}, committed " << t.footer.committed.size() << ", serializable " << (v.serializable ? "yes" : "no")
      << "; ";
  }
  return {ok, d.str()};
}

Outcome lock_audit() {
  const FuzzSummary& s = corpus();
  std::uint64_t bad = 0;
  std::string first;
  for (const auto& f : s.failures) {
    if (has_prefix(f.problems, "audit:")) {
      if (bad++ == 0) first = f.problems.front();
    }
  }
  std::ostringstream d;
  d << s.runs << " traces audited, " << bad << " with violations";
  if (!first.empty()) d << " (first: " << first << ")";
  return {s.runs == 500 && bad == 0, d.str()};
}

// One writer with k random steps, then a step that clashes with itself. A
// concurrent reader keeps the writer's locks contended.
std::string single_writer(Rng& rng, std::size_t k) {
  std::string text = "init /t = {a: {a: 1, b: 2}, b: {a: 3, b: 4}, s: \"base\"}\ninit /own = 0\n";
  text += "machine W\n  shared /t\n";
  const char* leaves[] = {"/t/a/a", "/t/a/b", "/t/b/a", "/t/b/b"};
  for (std::size_t i = 0; i < k; ++i) {
    text += "  step:\n";
    switch (below(rng, 4)) {
      case 0:
        text += std::string("    read /t/b/b\n    write ") + leaves[below(rng, 2)] + " := read(/t/b/b) + 7\n";
        break;
      case 1:
        text += std::string("    partial ") + leaves[below(rng, 4)] + " xor " + std::to_string(between(rng, 1, 99)) +
                "\n    partial /t/s append \"-" + std::to_string(i) + "\"\n";
        break;
      case 2:
        text += "    write /t/b := {a: " + std::to_string(between(rng, 0, 9)) + ", b: 0}\n";
        break;
      default:
        text += std::string("    partial ") + leaves[below(rng, 4)] + " add " + std::to_string(between(rng, -50, 50)) +
                "\n";
    }
  }
  text += "  step:\n    write /t/a/a := 100\n    write /t/a/a := 200\n";
  text += "machine R\n  shared /t\n  step:\n    read /t/a/b\n    write /own := read(/t/a/b)\n";
  return text;
}

Outcome abort_restoration() {
  Rng rng(88);
  std::size_t runs = 0, failed = 0, aborted = 0;
  for (std::size_t k = 0; k <= 8; ++k) {
    for (int trial = 0; trial < 10; ++trial) {
      Workload wl = parse_workload(single_writer(rng, k));
      for (auto sched : {SchedulerKind::RoundRobin, SchedulerKind::Random}) {
        RunOptions opts;
        opts.seed = k * 100 + static_cast<std::uint64_t>(trial);
        opts.scheduler = sched;
        Trace t = run(wl, opts);
        ++runs;
        bool w_aborted = std::find(t.footer.aborted.begin(), t.footer.aborted.end(), "W") != t.footer.aborted.end();
        aborted += w_aborted ? 1 : 0;
        std::size_t undone = SIZE_MAX;
        for (const auto& r : t.rounds) {
          for (const auto& e : r.events) {
            if (e["type"] == "abort" && e["machine"] == "W") undone = e["undone"].size();
          }
        }
        Store fin(t.footer.final_store.as_node());
        LocationPath tree = LocationPath::parse("/t");
        if (!w_aborted || undone != k || to_literal(eval(tree, fin)) != to_literal(eval(tree, wl.initial))) ++failed;
      }
    }
  }
  std::ostringstream d;
  d << runs << " runs with k = 0..8 fired steps, " << aborted << " aborts of the writer after exactly k fires, " << failed
    << " mismatched undo counts or stores differing from the initial store on the writer's locations";
  return {failed == 0 && aborted == runs, d.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "mltx-acceptance-determinism";
  fs::create_directories(dir);
  std::size_t compared = 0, differing = 0;
  GeneratorConfig cfg;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Workload wl = parse_workload(generate_workload(cfg, seed));
    for (int flags = 0; flags < 8; ++flags) {
      for (auto sched : {SchedulerKind::RoundRobin, SchedulerKind::Random}) {
        RunOptions opts;
        opts.seed = seed;
        opts.scheduler = sched;
        opts.subsumption = (flags & 1) != 0 ? SubsumptionMode::Strict : SubsumptionMode::Safe;
        opts.suspend = (flags & 2) != 0;
        opts.stagger = (flags & 4) != 0;
        write_trace(run(wl, opts), (dir / "a.jsonl").string());
        write_trace(run(wl, opts), (dir / "b.jsonl").string());
        ++compared;
        if (slurp(dir / "a.jsonl") != slurp(dir / "b.jsonl")) ++differing;
      }
    }
  }
  fs::remove_all(dir);
  std::ostringstream d;
  d << compared << " configurations run twice, " << differing << " differing trace files";
  return {differing == 0, d.str()};
}

}  // namespace

int main() {
  report(1, "fuzz theorem", fuzz_theorem);
  report(2, "aggregation fidelity", aggregation_fidelity);
  report(3, "inverse operation postulate", postulate);
  report(4, "undo commutativity", undo_commutativity);
  report(5, "operator compatibility permutations", permutations);
  report(6, "cross-lock deadlock", deadlock_scenario);
  report(7, "two-phase locking audit", lock_audit);
  report(8, "abort restoration", abort_restoration);
  report(9, "determinism", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
