#pragma once

// Shared helpers for the unit tests.

#include <string>
#include <vector>

#include "mltx/executor.hpp"
#include "mltx/trace.hpp"
#include "mltx/values.hpp"

namespace mltx::test {

inline LocationPath P(const char* text) { return LocationPath::parse(text); }

inline Store store_of(const char* literal) { return Store(parse_value(literal).as_node()); }

/// Events of `type` across the trace, in order.
inline std::vector<json> events_of(const Trace& t, const std::string& type) {
  std::vector<json> out;
  for (const auto& r : t.rounds) {
    for (const auto& e : r.events) {
      if (e["type"] == type) out.push_back(e);
    }
  }
  return out;
}

/// Round sequence of the first event of `type` for `machine`, or -1.
inline long long first_round(const Trace& t, const std::string& type, const std::string& machine) {
  for (const auto& r : t.rounds) {
    for (const auto& e : r.events) {
      if (e["type"] == type && e.contains("machine") && e["machine"] == machine) return static_cast<long long>(r.seq);
    }
  }
  return -1;
}

}  // namespace mltx::test
