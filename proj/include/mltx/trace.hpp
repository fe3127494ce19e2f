#pragma once

// Run traces, serialized as JSON Lines: a header line, one line per round and
// an "end" line. Object keys are emitted in sorted order, so a trace's bytes
// are a function of its contents.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mltx/locks.hpp"
#include "mltx/ops.hpp"
#include "mltx/values.hpp"

namespace mltx {

using json = nlohmann::json;

class MalformedTrace : public Error {
 public:
  using Error::Error;
};

struct TraceHeader {
  std::string workload_digest;
  std::uint64_t seed = 0;
  std::string scheduler;
  bool strict_subsumption = false;
  bool suspend = false;
  bool stagger = false;
  std::string victim_policy = "greatest-id";
  std::uint64_t max_rounds = 0;
  Value initial_store;
  std::vector<std::string> machines;
};

struct Round {
  std::uint64_t seq = 0;
  std::string agent;
  std::map<std::string, std::vector<GenuineUpdate>> delta;
  std::map<std::string, std::vector<PartialUpdate>> gamma;
  std::vector<GenuineUpdate> ctl;
  std::map<std::string, std::map<LocationPath, Value>> reads;
  json events = json::array();

  void event(json e) { events.push_back(std::move(e)); }
};

struct TraceFooter {
  bool completed = false;
  bool round_limit_exceeded = false;
  std::uint64_t rounds = 0;
  std::vector<std::string> committed;
  std::vector<std::string> aborted;
  Value final_store;
};

struct Trace {
  TraceHeader header;
  std::vector<Round> rounds;
  TraceFooter footer;
};

json value_to_json(const Value& v);
Value value_from_json(const json& j);

json genuine_to_json(const GenuineUpdate& u);
json partial_to_json(const PartialUpdate& u);
GenuineUpdate genuine_from_json(const json& j);
PartialUpdate partial_from_json(const json& j);

json lockset_to_json(const LockSet& locks);
LockSet lockset_from_json(const json& j);

json round_to_json(const Round& r);
Round round_from_json(const json& j);

std::string to_jsonl(const Trace& t);
Trace parse_trace(std::string_view text);

void write_trace(const Trace& t, const std::string& path);
Trace read_trace(const std::string& path);

}  // namespace mltx
