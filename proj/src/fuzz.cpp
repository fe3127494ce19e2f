#include "mltx/fuzz.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "mltx/serializability.hpp"

namespace mltx {

std::uint64_t run_seed(std::uint64_t base_seed, std::uint64_t index) {
  return splitmix64(base_seed + index);
}

namespace {

SchedulerKind scheduler_for(const FuzzConfig& cfg, std::uint64_t index) {
  if (cfg.scheduler == "both") return index % 2 == 0 ? SchedulerKind::RoundRobin : SchedulerKind::Random;
  return parse_scheduler(cfg.scheduler);
}

}  // namespace

FuzzRun fuzz_one(const FuzzConfig& cfg, std::uint64_t index) {
  FuzzRun r;
  r.index = index;
  r.seed = run_seed(cfg.base_seed, index);
  r.scheduler = scheduler_for(cfg, index);
  std::string text = cfg.pattern == FuzzPattern::CrossLock ? cross_lock_workload(r.seed)
                                                            : generate_workload(cfg.gen, r.seed);
  Trace trace;
  try {
    Workload wl = parse_workload(text);
    RunOptions opts;
    opts.seed = r.seed;
    opts.scheduler = r.scheduler;
    opts.subsumption = cfg.subsumption;
    opts.victim_policy = cfg.victim_policy;
    trace = run(wl, opts);
    r.completed = trace.footer.completed;
    r.rounds = trace.rounds.size();
    r.commits = trace.footer.committed.size();
    r.aborts = trace.footer.aborted.size();
    for (const auto& round : trace.rounds) {
      for (const auto& e : round.events) {
        if (e.value("type", "") == "victimized") ++r.victimizations;
      }
    }
    AuditReport audit = audit_trace(trace, wl);
    for (const auto& v : audit.violations) r.problems.push_back("audit: " + v);
    Verdict verdict = check_serializable(trace, wl);
    r.verdict = verdict.to_json();
    if (!verdict.serializable) r.problems.push_back("not serializable");
  } catch (const std::exception& e) {
    r.problems.push_back(std::string("error: ") + e.what());
  }
  r.violation = !r.problems.empty();
  if (r.violation) {
    r.workload = std::move(text);
    if (!trace.rounds.empty() || !trace.header.workload_digest.empty()) r.trace_jsonl = to_jsonl(trace);
  }
  return r;
}

json FuzzSummary::to_json() const {
  json fails = json::array();
  for (const auto& f : failures) {
    fails.push_back({{"index", f.index},
                     {"seed", f.seed},
                     {"scheduler", mltx::to_string(f.scheduler)},
                     {"problems", f.problems}});
  }
  return {{"runs", runs},
          {"completed", completed},
          {"round_limited", round_limited},
          {"commits", commits},
          {"aborts", aborts},
          {"deadlock_runs", deadlock_runs},
          {"victimizations", victimizations},
          {"violations", violations},
          {"failures", fails}};
}

FuzzSummary run_fuzz(const FuzzConfig& cfg) {
  if (cfg.pattern == FuzzPattern::Random) validate(cfg.gen);
  if (cfg.scheduler != "both") parse_scheduler(cfg.scheduler);
  auto started = std::chrono::steady_clock::now();

  std::vector<std::optional<FuzzRun>> results(cfg.runs);
  std::atomic<std::uint64_t> next{0};
  std::atomic<std::uint64_t> first_violation{UINT64_MAX};
  auto worker = [&] {
    for (;;) {
      std::uint64_t i = next.fetch_add(1);
      if (i >= cfg.runs) return;
      if (!cfg.keep_going && i > first_violation.load()) return;
      FuzzRun r = fuzz_one(cfg, i);
      if (r.violation) {
        std::uint64_t cur = first_violation.load();
        while (i < cur && !first_violation.compare_exchange_weak(cur, i)) {
        }
      }
      results[i] = std::move(r);
    }
  };
  unsigned jobs = cfg.jobs != 0 ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::uint64_t>(jobs, std::max<std::uint64_t>(cfg.runs, 1)));
  std::vector<std::thread> threads;
  for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  FuzzSummary s;
  std::uint64_t last = cfg.runs;
  if (!cfg.keep_going && first_violation.load() < cfg.runs) last = first_violation.load() + 1;
  for (std::uint64_t i = 0; i < last; ++i) {
    auto& r = results[i];
    if (!r) continue;
    ++s.runs;
    if (r->completed) {
      ++s.completed;
    } else {
      ++s.round_limited;
    }
    s.commits += r->commits;
    s.aborts += r->aborts;
    s.victimizations += r->victimizations;
    if (r->victimizations > 0) ++s.deadlock_runs;
    if (r->violation) {
      ++s.violations;
      s.failures.push_back(std::move(*r));
    }
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return s;
}

std::string write_artifacts(const FuzzConfig& cfg, const FuzzRun& run) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(cfg.artifacts_dir) / ("run-" + std::to_string(run.index) + "-seed-" + std::to_string(run.seed));
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << content;
  };
  put("workload.mltx", run.workload);
  if (!run.trace_jsonl.empty()) put("trace.jsonl", run.trace_jsonl);
  json report = {{"seed", run.seed}, {"scheduler", to_string(run.scheduler)}, {"problems", run.problems}};
  if (!run.verdict.is_null()) report["verdict"] = run.verdict;
  put("report.json", report.dump(2) + "\n");
  std::string flags = std::string(" --seed ") + std::to_string(run.seed) + " --scheduler " + to_string(run.scheduler);
  if (cfg.subsumption == SubsumptionMode::Strict) flags += " --strict-subsumption";
  if (cfg.victim_policy != VictimPolicy::GreatestId) flags += std::string(" --victim-policy ") + to_string(cfg.victim_policy);
  put("REPRO", "mltx simulate --workload workload.mltx" + flags + " --out trace.jsonl\n" +
                   "mltx check --workload workload.mltx --trace trace.jsonl\n");
  return dir.string();
}

}  // namespace mltx
