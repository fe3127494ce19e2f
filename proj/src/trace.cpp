#include "mltx/trace.hpp"

#include <fstream>
#include <sstream>

namespace mltx {

json value_to_json(const Value& v) {
  switch (v.data.index()) {
    case 0: return std::get<std::int64_t>(v.data);
    case 1: return std::get<std::string>(v.data);
    case 2: return std::get<bool>(v.data);
    default: break;
  }
  json obj = json::object();
  for (const auto& [k, child] : v.as_node()) obj[k] = value_to_json(child);
  return obj;
}

Value value_from_json(const json& j) {
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_object()) {
    Node n;
    for (const auto& [k, child] : j.items()) {
      if (!is_identifier(k)) throw MalformedTrace("invalid node key '" + k + "'");
      n.emplace(k, value_from_json(child));
    }
    return Value(std::move(n));
  }
  throw MalformedTrace("unsupported JSON value " + j.dump());
}

namespace {

LocationPath path_from_json(const json& j) {
  if (!j.is_string()) throw MalformedTrace("expected a location path, got " + j.dump());
  try {
    return LocationPath::parse(j.get<std::string>());
  } catch (const Error& e) {
    throw MalformedTrace(e.what());
  }
}

const json& field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw MalformedTrace(std::string("missing field '") + name + "'");
  }
  return j.at(name);
}

}  // namespace

json genuine_to_json(const GenuineUpdate& u) {
  return json::array({"genuine", u.loc.str(), value_to_json(u.val)});
}

json partial_to_json(const PartialUpdate& u) {
  return json::array({"partial", u.loc.str(), u.op, value_to_json(u.arg)});
}

GenuineUpdate genuine_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3 || j[0] != "genuine") {
    throw MalformedTrace("malformed genuine update " + j.dump());
  }
  return GenuineUpdate{path_from_json(j[1]), value_from_json(j[2])};
}

PartialUpdate partial_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4 || j[0] != "partial" || !j[2].is_string()) {
    throw MalformedTrace("malformed partial update " + j.dump());
  }
  return PartialUpdate{path_from_json(j[1]), j[2].get<std::string>(), value_from_json(j[3])};
}

json lockset_to_json(const LockSet& locks) {
  json out = json::array();
  for (const auto& [l, m] : locks) out.push_back(json::array({l.str(), m.str()}));
  return out;
}

LockSet lockset_from_json(const json& j) {
  if (!j.is_array()) throw MalformedTrace("expected a lock list");
  LockSet out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[1].is_string()) throw MalformedTrace("malformed lock " + e.dump());
    try {
      out.emplace(path_from_json(e[0]), LockMode::parse(e[1].get<std::string>()));
    } catch (const MalformedTrace&) {
      throw;
    } catch (const Error& err) {
      throw MalformedTrace(err.what());
    }
  }
  return out;
}

json round_to_json(const Round& r) {
  json j;
  j["seq"] = r.seq;
  j["agent"] = r.agent;
  json delta = json::object();
  for (const auto& [m, ups] : r.delta) {
    json arr = json::array();
    for (const auto& u : ups) arr.push_back(genuine_to_json(u));
    delta[m] = std::move(arr);
  }
  j["delta"] = std::move(delta);
  json gamma = json::object();
  for (const auto& [m, ups] : r.gamma) {
    json arr = json::array();
    for (const auto& u : ups) arr.push_back(partial_to_json(u));
    gamma[m] = std::move(arr);
  }
  j["gamma"] = std::move(gamma);
  json ctl = json::array();
  for (const auto& u : r.ctl) ctl.push_back(genuine_to_json(u));
  j["ctl"] = std::move(ctl);
  json reads = json::object();
  for (const auto& [m, vals] : r.reads) {
    json obj = json::object();
    for (const auto& [p, v] : vals) obj[p.str()] = value_to_json(v);
    reads[m] = std::move(obj);
  }
  j["reads"] = std::move(reads);
  j["events"] = r.events;
  return j;
}

Round round_from_json(const json& j) {
  Round r;
  try {
    r.seq = field(j, "seq").get<std::uint64_t>();
    r.agent = field(j, "agent").get<std::string>();
    for (const auto& [m, arr] : field(j, "delta").items()) {
      auto& v = r.delta[m];
      for (const auto& u : arr) v.push_back(genuine_from_json(u));
    }
    for (const auto& [m, arr] : field(j, "gamma").items()) {
      auto& v = r.gamma[m];
      for (const auto& u : arr) v.push_back(partial_from_json(u));
    }
    for (const auto& u : field(j, "ctl")) r.ctl.push_back(genuine_from_json(u));
    for (const auto& [m, obj] : field(j, "reads").items()) {
      auto& vals = r.reads[m];
      for (const auto& [p, v] : obj.items()) vals.emplace(path_from_json(p), value_from_json(v));
    }
    r.events = field(j, "events");
    if (!r.events.is_array()) throw MalformedTrace("events must be an array");
  } catch (const json::exception& e) {
    throw MalformedTrace(std::string("malformed round: ") + e.what());
  }
  return r;
}

std::string to_jsonl(const Trace& t) {
  std::string out;
  json h;
  h["kind"] = "header";
  h["workload_digest"] = t.header.workload_digest;
  h["seed"] = t.header.seed;
  h["scheduler"] = t.header.scheduler;
  h["strict_subsumption"] = t.header.strict_subsumption;
  h["suspend"] = t.header.suspend;
  h["stagger"] = t.header.stagger;
  h["victim_policy"] = t.header.victim_policy;
  h["max_rounds"] = t.header.max_rounds;
  h["initial_store"] = value_to_json(t.header.initial_store);
  h["machines"] = t.header.machines;
  out += h.dump();
  out += '\n';
  for (const auto& r : t.rounds) {
    out += round_to_json(r).dump();
    out += '\n';
  }
  json f;
  f["kind"] = "end";
  f["completed"] = t.footer.completed;
  f["round_limit_exceeded"] = t.footer.round_limit_exceeded;
  f["rounds"] = t.footer.rounds;
  f["committed"] = t.footer.committed;
  f["aborted"] = t.footer.aborted;
  f["final_store"] = value_to_json(t.footer.final_store);
  out += f.dump();
  out += '\n';
  return out;
}

Trace parse_trace(std::string_view text) {
  Trace t;
  bool have_header = false;
  bool have_footer = false;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (have_footer) throw MalformedTrace("content after the end line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedTrace("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (!j.is_object() || j.value("kind", "") != "header") throw MalformedTrace("first line must be a header");
        t.header.workload_digest = field(j, "workload_digest").get<std::string>();
        t.header.seed = field(j, "seed").get<std::uint64_t>();
        t.header.scheduler = field(j, "scheduler").get<std::string>();
        t.header.strict_subsumption = field(j, "strict_subsumption").get<bool>();
        t.header.suspend = field(j, "suspend").get<bool>();
        t.header.stagger = field(j, "stagger").get<bool>();
        t.header.victim_policy = field(j, "victim_policy").get<std::string>();
        t.header.max_rounds = field(j, "max_rounds").get<std::uint64_t>();
        t.header.initial_store = value_from_json(field(j, "initial_store"));
        t.header.machines = field(j, "machines").get<std::vector<std::string>>();
        have_header = true;
      } else if (j.is_object() && j.value("kind", "") == "end") {
        t.footer.completed = field(j, "completed").get<bool>();
        t.footer.round_limit_exceeded = field(j, "round_limit_exceeded").get<bool>();
        t.footer.rounds = field(j, "rounds").get<std::uint64_t>();
        t.footer.committed = field(j, "committed").get<std::vector<std::string>>();
        t.footer.aborted = field(j, "aborted").get<std::vector<std::string>>();
        t.footer.final_store = value_from_json(field(j, "final_store"));
        have_footer = true;
      } else {
        Round r = round_from_json(j);
        if (!t.rounds.empty() && r.seq <= t.rounds.back().seq) {
          throw MalformedTrace("round sequence numbers must increase");
        }
        t.rounds.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw MalformedTrace("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw MalformedTrace("empty trace");
  if (!have_footer) throw MalformedTrace("trace has no end line");
  return t;
}

void write_trace(const Trace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write trace file '" + path + "'");
  out << to_jsonl(t);
  if (!out) throw Error("failed writing trace file '" + path + "'");
}

Trace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read trace file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trace(ss.str());
}

}  // namespace mltx
