// Drives the mltx binary through its subcommands and checks exit codes.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mltx/generator.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("mltx-cli-" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string file(const std::string& name, const std::string& text = "") const {
    fs::path p = dir / name;
    if (!text.empty()) std::ofstream(p) << text;
    return p.string();
  }
};

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result invoke(const Scratch& s, const std::string& args, const std::string& env = "") {
  std::string out = s.file("stdout"), err = s.file("stderr");
  std::string cmd = env + " " + MLTX_BIN + " " + args + " >" + out + " 2>" + err;
  int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kWorkload =
    "init /x = 0\n"
    "machine M1\n  shared /x\n  step:\n    partial /x add 2\n"
    "machine M2\n  shared /x\n  step:\n    partial /x add 3\n";

}  // namespace

TEST_CASE("simulate writes a trace and check accepts it") {
  Scratch s;
  std::string wl = s.file("w.mltx", kWorkload), trace = s.file("t.jsonl");
  Result sim = invoke(s, "simulate --workload " + wl + " --seed 1 --out " + trace);
  CHECK(sim.code == 0);
  CHECK(fs::exists(trace));
  Result chk = invoke(s, "check --workload " + wl + " --trace " + trace);
  CHECK(chk.code == 0);
  auto verdict = nlohmann::json::parse(chk.out);
  CHECK(verdict["serializable"] == true);
  CHECK(verdict["lock_audit"].empty());
}

TEST_CASE("simulate is byte-identical across invocations") {
  Scratch s;
  std::string wl = s.file("w.mltx", mltx::generate_workload(mltx::GeneratorConfig{}, 17));
  std::string a = s.file("a.jsonl"), b = s.file("b.jsonl");
  for (const char* sched : {"rr", "random"}) {
    std::string flags = std::string(" --seed 5 --scheduler ") + sched + " --workload " + wl;
    invoke(s, "simulate" + flags + " --out " + a);
    invoke(s, "simulate" + flags + " --out " + b);
    CHECK(slurp(a) == slurp(b));
    CHECK_FALSE(slurp(a).empty());
  }
}

TEST_CASE("the seed defaults to MLTX_SEED") {
  Scratch s;
  std::string wl = s.file("w.mltx", kWorkload), trace = s.file("t.jsonl");
  CHECK(invoke(s, "simulate --workload " + wl + " --out " + trace, "MLTX_SEED=77").code == 0);
  CHECK(slurp(trace).find("\"seed\":77") != std::string::npos);
  CHECK(invoke(s, "simulate --workload " + wl + " --out " + trace, "MLTX_SEED=abc").code == 1);
}

TEST_CASE("simulate exit codes for errors and the round limit") {
  Scratch s;
  Result missing = invoke(s, "simulate --workload /nonexistent/w.mltx --out " + s.file("t.jsonl"));
  CHECK(missing.code == 1);
  CHECK(missing.err.find("/nonexistent/w.mltx") != std::string::npos);

  std::string bad = s.file("bad.mltx", "machine M\n  step:\n    write /nowhere := 1\n");
  CHECK(invoke(s, "simulate --workload " + bad + " --out " + s.file("t.jsonl")).code == 1);

  std::string wl = s.file("w.mltx", kWorkload);
  Result limited = invoke(s, "simulate --workload " + wl + " --max-rounds 2 --out " + s.file("t.jsonl"));
  CHECK(limited.code == 2);
}

TEST_CASE("check exit codes for forged and mismatched traces") {
  Scratch s;
  std::string wl = s.file("w.mltx", kWorkload), trace = s.file("t.jsonl");
  REQUIRE(invoke(s, "simulate --workload " + wl + " --seed 1 --out " + trace).code == 0);

  std::string text = slurp(trace);
  auto pos = text.find("[\"partial\",\"/x\",\"add\",3]");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 24, "[\"partial\",\"/x\",\"add\",4]");
  std::string forged = s.file("forged.jsonl", text);
  Result f = invoke(s, "check --workload " + wl + " --trace " + forged);
  CHECK(f.code == 3);
  CHECK(nlohmann::json::parse(f.out)["divergence"]["machine"] == "M2");

  std::string other = s.file("other.mltx", std::string(kWorkload) + "# changed\n");
  CHECK(invoke(s, "check --workload " + other + " --trace " + trace).code == 1);
  std::string junk = s.file("junk.jsonl", "{\n");
  CHECK(invoke(s, "check --workload " + wl + " --trace " + junk).code == 1);
}

TEST_CASE("fuzz prints a summary") {
  Scratch s;
  Result zero = invoke(s, "fuzz --runs 0 --artifacts ''");
  CHECK(zero.code == 0);
  auto z = nlohmann::json::parse(zero.out);
  CHECK(z["runs"] == 0);
  CHECK(z["violations"] == 0);

  Result some = invoke(s, "fuzz --runs 20 --seed 4 --jobs 2 --artifacts ''");
  CHECK(some.code == 0);
  CHECK(nlohmann::json::parse(some.out)["runs"] == 20);

  Result cross = invoke(s, "fuzz --runs 10 --pattern cross --scheduler rr --artifacts ''");
  CHECK(cross.code == 0);
  CHECK(nlohmann::json::parse(cross.out)["deadlock_runs"].get<int>() >= 1);

  CHECK(invoke(s, "fuzz --runs 1 --machines 5-2").code == 1);
  CHECK(invoke(s, "fuzz --runs 1 --scheduler fifo").code != 0);
}

TEST_CASE("usage errors") {
  Scratch s;
  CHECK(invoke(s, "").code != 0);
  CHECK(invoke(s, "simulate").code != 0);
  CHECK(invoke(s, "--help").code == 0);
}
