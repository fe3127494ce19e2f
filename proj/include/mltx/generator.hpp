#pragma once

// Random workload generation for fuzzing.

#include <cstdint>
#include <string>

namespace mltx {

struct Range {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
};

/// Parses "N" or "LO-HI"; throws Error on malformed or empty ranges.
Range parse_range(const std::string& text);

struct GeneratorConfig {
  Range machines{2, 5};
  std::uint32_t max_depth = 3;
  /// Leaf locations over all shared trees.
  Range locations{4, 12};
  Range steps{4, 12};
  double partial_ratio = 0.5;
  /// Lets partial operators mix freely (including append and mul) and
  /// sprinkles in steps that cannot fire.
  bool adversarial = false;
};

/// Throws Error if a range is empty, depth is outside [1, 4] or the ratio is
/// outside [0, 1].
void validate(const GeneratorConfig& cfg);

/// A workload text, a pure function of (cfg, seed). Outside adversarial mode
/// each top-level tree is updated partially by a single operator family
/// (add or xor), so aborts come only from genuine conflicts.
std::string generate_workload(const GeneratorConfig& cfg, std::uint64_t seed);

/// Two machines writing /x and /y in opposite orders. Values vary with the seed.
std::string cross_lock_workload(std::uint64_t seed);

}  // namespace mltx
