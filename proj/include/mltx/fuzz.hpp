#pragma once

// Generate, simulate, check loops over seeded random workloads.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mltx/executor.hpp"
#include "mltx/generator.hpp"
#include "mltx/trace.hpp"

namespace mltx {

enum class FuzzPattern : std::uint8_t { Random, CrossLock };

struct FuzzConfig {
  GeneratorConfig gen;
  std::uint64_t runs = 500;
  std::uint64_t base_seed = 1;
  /// "rr", "random", or "both" (alternating by run index).
  std::string scheduler = "both";
  SubsumptionMode subsumption = SubsumptionMode::Safe;
  VictimPolicy victim_policy = VictimPolicy::GreatestId;
  FuzzPattern pattern = FuzzPattern::Random;
  bool keep_going = false;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned jobs = 0;
  /// Where failing runs are written; empty disables artifacts.
  std::string artifacts_dir;
};

std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t index);

struct FuzzRun {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  SchedulerKind scheduler = SchedulerKind::RoundRobin;
  bool completed = false;
  std::size_t rounds = 0;
  std::size_t commits = 0;
  std::size_t aborts = 0;
  std::size_t victimizations = 0;
  bool violation = false;
  std::vector<std::string> problems;
  // Kept only for failing runs.
  std::string workload;
  std::string trace_jsonl;
  json verdict;
};

/// One run: generate, simulate, audit and check.
FuzzRun fuzz_one(const FuzzConfig& cfg, std::uint64_t index);

struct FuzzSummary {
  std::uint64_t runs = 0;
  std::uint64_t completed = 0;
  std::uint64_t round_limited = 0;
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
  std::uint64_t deadlock_runs = 0;
  std::uint64_t victimizations = 0;
  std::uint64_t violations = 0;
  std::vector<FuzzRun> failures;
  double seconds = 0;

  json to_json() const;
};

/// Runs in parallel. Without keep_going, only runs up to the first violating
/// index are counted, so the summary does not depend on thread timing.
FuzzSummary run_fuzz(const FuzzConfig& cfg);

/// Writes workload, trace, verdict and a reproduction note for a failing run;
/// returns the directory written.
std::string write_artifacts(const FuzzConfig& cfg, const FuzzRun& run);

}  // namespace mltx
