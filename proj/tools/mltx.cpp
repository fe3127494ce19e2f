// mltx: simulate workloads, check traces, fuzz.
//
// Exit codes: 0 success, 1 usage/input errors, 2 round limit reached during
// simulate, 3 serializability or lock-discipline violation.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mltx/executor.hpp"
#include "mltx/fuzz.hpp"
#include "mltx/serializability.hpp"
#include "mltx/trace.hpp"
#include "mltx/workload.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kRoundLimit = 2;
constexpr int kViolation = 3;

std::uint64_t default_seed() {
  const char* env = std::getenv("MLTX_SEED");
  if (env == nullptr || *env == '\0') return 0;
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(env, &used);
    if (used == std::string(env).size()) return v;
  } catch (const std::exception&) {
  }
  throw mltx::Error(std::string("MLTX_SEED must be an unsigned integer, got '") + env + "'");
}

struct SimulateArgs {
  std::string workload;
  std::optional<std::uint64_t> seed;
  std::string scheduler = "rr";
  bool strict = false;
  bool suspend = false;
  bool stagger = false;
  std::string victim_policy = "greatest-id";
  std::uint64_t max_rounds = 0;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  mltx::Workload wl = mltx::load_workload(a.workload);
  mltx::RunOptions opts;
  opts.seed = a.seed ? *a.seed : default_seed();
  opts.scheduler = mltx::parse_scheduler(a.scheduler);
  opts.subsumption = a.strict ? mltx::SubsumptionMode::Strict : mltx::SubsumptionMode::Safe;
  opts.suspend = a.suspend;
  opts.stagger = a.stagger;
  opts.victim_policy = mltx::parse_victim_policy(a.victim_policy);
  opts.max_rounds = a.max_rounds;
  mltx::Trace t = mltx::run(wl, opts);
  mltx::write_trace(t, a.out);
  std::cerr << "rounds " << t.footer.rounds << ", committed " << t.footer.committed.size() << ", aborted "
            << t.footer.aborted.size() << "\n";
  if (t.footer.round_limit_exceeded) {
    std::cerr << "round limit of " << t.header.max_rounds << " reached\n";
    return kRoundLimit;
  }
  return kOk;
}

struct CheckArgs {
  std::string workload;
  std::string trace;
};

int cmd_check(const CheckArgs& a) {
  mltx::Workload wl = mltx::load_workload(a.workload);
  mltx::Trace t = mltx::read_trace(a.trace);
  mltx::Verdict v = mltx::check_serializable(t, wl);
  mltx::AuditReport audit = mltx::audit_trace(t, wl);
  mltx::json out = v.to_json();
  out["lock_audit"] = audit.violations;
  std::cout << out.dump(2) << "\n";
  return v.serializable && audit.ok() ? kOk : kViolation;
}

struct FuzzArgs {
  std::uint64_t runs = 500;
  std::optional<std::uint64_t> seed;
  std::string machines = "2-5";
  std::uint32_t depth = 3;
  std::string locations = "4-12";
  std::string steps = "4-12";
  double partial_ratio = 0.5;
  std::string scheduler = "both";
  bool strict = false;
  bool adversarial = false;
  bool keep_going = false;
  std::string victim_policy = "greatest-id";
  std::string pattern = "random";
  unsigned jobs = 0;
  std::string artifacts = "fuzz-artifacts";
};

int cmd_fuzz(const FuzzArgs& a) {
  mltx::FuzzConfig cfg;
  cfg.runs = a.runs;
  cfg.base_seed = a.seed ? *a.seed : default_seed();
  cfg.gen.machines = mltx::parse_range(a.machines);
  cfg.gen.max_depth = a.depth;
  cfg.gen.locations = mltx::parse_range(a.locations);
  cfg.gen.steps = mltx::parse_range(a.steps);
  cfg.gen.partial_ratio = a.partial_ratio;
  cfg.gen.adversarial = a.adversarial;
  cfg.scheduler = a.scheduler;
  cfg.subsumption = a.strict ? mltx::SubsumptionMode::Strict : mltx::SubsumptionMode::Safe;
  cfg.keep_going = a.keep_going;
  cfg.victim_policy = mltx::parse_victim_policy(a.victim_policy);
  cfg.jobs = a.jobs;
  cfg.artifacts_dir = a.artifacts;
  if (a.pattern == "cross") {
    cfg.pattern = mltx::FuzzPattern::CrossLock;
  } else if (a.pattern != "random") {
    throw mltx::Error("unknown pattern '" + a.pattern + "' (expected random or cross)");
  }

  mltx::FuzzSummary s = mltx::run_fuzz(cfg);
  for (const auto& f : s.failures) {
    std::cerr << "violation in run " << f.index << " (seed " << f.seed << ", " << mltx::to_string(f.scheduler)
              << "):\n";
    for (const auto& p : f.problems) std::cerr << "  " << p << "\n";
    if (!cfg.artifacts_dir.empty()) std::cerr << "  artifacts: " << mltx::write_artifacts(cfg, f) << "\n";
  }
  mltx::json out = s.to_json();
  out["base_seed"] = cfg.base_seed;
  std::cout << out.dump(2) << "\n";
  return s.violations == 0 ? kOk : kViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level transaction controller simulator and serializability checker"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a workload and write its trace");
  simulate->add_option("--workload", sim.workload, "Workload file")->required();
  simulate->add_option("--seed", sim.seed, "Choice and scheduler seed (default: $MLTX_SEED or 0)");
  simulate->add_option("--scheduler", sim.scheduler, "rr or random")->check(CLI::IsMember({"rr", "random"}));
  simulate->add_flag("--strict-subsumption", sim.strict, "Only subsuming locks block (no descendant check)");
  simulate->add_flag("--suspend", sim.suspend, "Skip machines whose lock request would be refused");
  simulate->add_flag("--stagger", sim.stagger, "Join machines at seeded rounds");
  simulate->add_option("--victim-policy", sim.victim_policy, "greatest-id or least-victimized")
      ->check(CLI::IsMember({"greatest-id", "least-victimized"}));
  simulate->add_option("--max-rounds", sim.max_rounds, "Round limit (default 100 x total steps)");
  simulate->add_option("--out", sim.out, "Trace output file")->required();

  CheckArgs chk;
  auto* check = app.add_subcommand("check", "Check a trace for serializability");
  check->add_option("--workload", chk.workload, "Workload file")->required();
  check->add_option("--trace", chk.trace, "Trace file")->required();

  FuzzArgs fz;
  auto* fuzz = app.add_subcommand("fuzz", "Generate, simulate and check random workloads");
  fuzz->add_option("--runs", fz.runs, "Number of runs");
  fuzz->add_option("--seed", fz.seed, "Base seed (default: $MLTX_SEED or 0)");
  fuzz->add_option("--machines", fz.machines, "Machines per workload, N or LO-HI");
  fuzz->add_option("--depth", fz.depth, "Maximum location tree depth (1-4)");
  fuzz->add_option("--locations", fz.locations, "Leaf locations, N or LO-HI");
  fuzz->add_option("--steps", fz.steps, "Steps per machine, N or LO-HI");
  fuzz->add_option("--partial-ratio", fz.partial_ratio, "Share of partial updates among writes");
  fuzz->add_option("--scheduler", fz.scheduler, "rr, random or both")
      ->check(CLI::IsMember({"rr", "random", "both"}));
  fuzz->add_flag("--strict-subsumption", fz.strict, "Only subsuming locks block");
  fuzz->add_flag("--adversarial", fz.adversarial, "Mix incompatible operators and unfireable steps");
  fuzz->add_flag("--keep-going", fz.keep_going, "Do not stop at the first violation");
  fuzz->add_option("--victim-policy", fz.victim_policy, "greatest-id or least-victimized")
      ->check(CLI::IsMember({"greatest-id", "least-victimized"}));
  fuzz->add_option("--pattern", fz.pattern, "random or cross")->check(CLI::IsMember({"random", "cross"}));
  fuzz->add_option("--jobs", fz.jobs, "Worker threads (default: all cores)");
  fuzz->add_option("--artifacts", fz.artifacts, "Directory for failing runs (empty to disable)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (check->parsed()) return cmd_check(chk);
    if (fuzz->parsed()) return cmd_fuzz(fz);
  } catch (const std::exception& e) {
    std::cerr << "mltx: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
