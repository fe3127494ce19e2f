#include "mltx/generator.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <vector>

#include "mltx/rng.hpp"
#include "mltx/values.hpp"

namespace mltx {

Range parse_range(const std::string& text) {
  auto num = [&](std::string_view s) {
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw Error("malformed range '" + text + "'");
    return v;
  };
  Range r;
  if (auto dash = text.find('-'); dash != std::string::npos) {
    r.lo = num(std::string_view(text).substr(0, dash));
    r.hi = num(std::string_view(text).substr(dash + 1));
  } else {
    r.lo = r.hi = num(text);
  }
  if (r.lo > r.hi) throw Error("empty range '" + text + "'");
  return r;
}

void validate(const GeneratorConfig& cfg) {
  for (const Range* r : {&cfg.machines, &cfg.locations, &cfg.steps}) {
    if (r->lo > r->hi) throw Error("empty range");
  }
  if (cfg.machines.lo == 0) throw Error("at least one machine is required");
  if (cfg.locations.lo == 0) throw Error("at least one location is required");
  if (cfg.max_depth < 1 || cfg.max_depth > 4) throw Error("tree depth must be between 1 and 4");
  if (!(cfg.partial_ratio >= 0.0 && cfg.partial_ratio <= 1.0)) throw Error("partial ratio must be in [0, 1]");
}

namespace {

struct Tree {
  LocationPath path;
  std::vector<Tree> children;  // empty for a leaf

  bool leaf() const { return children.empty(); }
};

struct Family {
  Tree root;
  std::string op;
  bool text = false;
  std::vector<LocationPath> leaves;
  std::vector<const Tree*> nodes;  // every subtree, root included
};

Tree build_tree(const LocationPath& path, std::uint32_t depth_left, std::uint32_t& budget, Rng& rng) {
  Tree t{path, {}};
  if (depth_left <= 1 || budget <= 1) {
    if (budget > 0) --budget;
    return t;
  }
  auto width = static_cast<std::size_t>(between(rng, 2, 3));
  for (std::size_t i = 0; i < width && (i < 2 || budget > 0); ++i) {
    auto d = static_cast<std::uint32_t>(between(rng, 1, static_cast<std::int64_t>(depth_left - 1)));
    t.children.push_back(build_tree(path.child(std::string(1, static_cast<char>('a' + i))), d, budget, rng));
  }
  return t;
}

void collect(const Tree& t, Family& f) {
  f.nodes.push_back(&t);
  if (t.leaf()) {
    f.leaves.push_back(t.path);
    return;
  }
  for (const auto& c : t.children) collect(c, f);
}

std::string scalar_literal(const Family& f, Rng& rng) {
  if (f.text) {
    static const char* words[] = {"a", "bc", "xyz", "q", ""};
    return std::string("\"") + words[below(rng, 5)] + "\"";
  }
  return std::to_string(between(rng, -5, 40));
}

std::string tree_literal(const Tree& t, const Family& f, Rng& rng) {
  if (t.leaf()) return scalar_literal(f, rng);
  std::string out = "{";
  for (std::size_t i = 0; i < t.children.size(); ++i) {
    if (i > 0) out += ", ";
    out += t.children[i].path.segments().back() + ": " + tree_literal(t.children[i], f, rng);
  }
  return out + "}";
}

struct StepBuilder {
  std::vector<LocationPath> reads;
  std::vector<std::string> writes;
  std::vector<LocationPath> targets;

  void add_read(const LocationPath& l) {
    if (std::find(reads.begin(), reads.end(), l) == reads.end()) reads.push_back(l);
  }
  bool free_target(const LocationPath& l) const {
    return std::none_of(targets.begin(), targets.end(), [&](const LocationPath& t) { return overlaps(t, l); });
  }
};

// An expression of the family's carrier; may read int leaves of `f`.
std::string int_expr(const Family& f, StepBuilder& sb, Rng& rng, bool small) {
  auto lit = [&] { return std::to_string(small ? between(rng, 1, 9) : between(rng, -5, 40)); };
  switch (below(rng, 4)) {
    case 0: return lit();
    case 1: {
      const auto& l = f.leaves[below(rng, f.leaves.size())];
      sb.add_read(l);
      return "read(" + l.str() + ") + " + lit();
    }
    case 2: return "choose(" + lit() + ", " + lit() + ", " + lit() + ")";
    default: {
      const auto& l = f.leaves[below(rng, f.leaves.size())];
      sb.add_read(l);
      return "if read(" + l.str() + ") > " + std::to_string(between(rng, 0, 30)) + " then " + lit() + " else " +
             lit();
    }
  }
}

std::string text_expr(const Family& f, StepBuilder& sb, Rng& rng) {
  if (chance(rng, 0.3)) {
    const auto& l = f.leaves[below(rng, f.leaves.size())];
    sb.add_read(l);
    return "read(" + l.str() + ") + \"k\"";
  }
  return chance(rng, 0.5) ? scalar_literal(f, rng) : "choose(\"u\", \"vw\")";
}

std::string partial_arg(const std::string& op, const Family& f, StepBuilder& sb, Rng& rng) {
  if (op == "mul") return chance(rng, 0.5) ? "choose(1, -1)" : "-1";
  if (op == "append") return chance(rng, 0.5) ? "\"p\"" : "choose(\"r\", \"st\")";
  return int_expr(f, sb, rng, true);
}

}  // namespace

std::string generate_workload(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(splitmix64(seed ^ 0x776f726b6c6f6164ULL));

  std::uint32_t budget =
      static_cast<std::uint32_t>(between(rng, cfg.locations.lo, cfg.locations.hi));
  std::vector<Family> families;
  while (budget > 0) {
    std::string name = "f" + std::to_string(families.size());
    auto depth = static_cast<std::uint32_t>(between(rng, 1, cfg.max_depth));
    std::uint32_t share = families.size() >= 2 ? budget : static_cast<std::uint32_t>(between(rng, 1, budget));
    budget -= share;
    Family f{build_tree(LocationPath::parse("/" + name), depth, share, rng), {}, false, {}, {}};
    budget += share;  // leftover from a shallow tree goes to the next family
    if (cfg.adversarial) {
      static const char* ops[] = {"add", "xor", "mul", "append"};
      f.op = ops[below(rng, 4)];
      f.text = f.op == "append";
    } else {
      f.op = chance(rng, 0.5) ? "add" : "xor";
    }
    families.push_back(std::move(f));
  }
  for (auto& f : families) collect(f.root, f);

  auto n_machines = static_cast<std::size_t>(between(rng, cfg.machines.lo, cfg.machines.hi));
  std::string out = "# generated workload, seed " + std::to_string(seed) + "\n";
  for (const auto& f : families) out += "init " + f.root.path.str() + " = " + tree_literal(f.root, f, rng) + "\n";
  for (std::size_t m = 1; m <= n_machines; ++m) out += "init /own" + std::to_string(m) + " = 0\n";

  for (std::size_t m = 1; m <= n_machines; ++m) {
    std::string own = "/own" + std::to_string(m);
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < families.size(); ++i) {
      if (chance(rng, 0.6)) mine.push_back(i);
    }
    if (mine.empty()) mine.push_back(below(rng, families.size()));

    out += "\nmachine M" + std::to_string(m) + "\n  shared";
    for (auto i : mine) out += " " + families[i].root.path.str();
    out += "\n";

    auto n_steps = static_cast<std::size_t>(between(rng, cfg.steps.lo, cfg.steps.hi));
    for (std::size_t s = 0; s < n_steps; ++s) {
      StepBuilder sb;
      const Family& f = families[mine[below(rng, mine.size())]];
      if (chance(rng, 0.4)) {
        const Tree* t = f.nodes[below(rng, f.nodes.size())];
        sb.add_read(t->path);
      }
      auto n_writes = static_cast<std::size_t>(between(rng, 1, 2));
      for (std::size_t w = 0; w < n_writes; ++w) {
        const Family& g = families[mine[below(rng, mine.size())]];
        bool partial = chance(rng, cfg.partial_ratio);
        if (partial) {
          const auto& l = g.leaves[below(rng, g.leaves.size())];
          if (!sb.free_target(l)) continue;
          std::string op = g.op;
          if (cfg.adversarial && chance(rng, 0.2)) op = g.text ? "append" : (chance(rng, 0.5) ? "add" : "xor");
          sb.targets.push_back(l);
          sb.writes.push_back("partial " + l.str() + " " + op + " " + partial_arg(op, g, sb, rng));
        } else if (chance(rng, 0.15)) {
          const Tree* t = g.nodes[below(rng, g.nodes.size())];
          if (!sb.free_target(t->path)) continue;
          sb.targets.push_back(t->path);
          sb.writes.push_back("write " + t->path.str() + " := " + tree_literal(*t, g, rng));
        } else {
          const auto& l = g.leaves[below(rng, g.leaves.size())];
          if (!sb.free_target(l)) continue;
          sb.targets.push_back(l);
          sb.writes.push_back("write " + l.str() + " := " +
                              (g.text ? text_expr(g, sb, rng) : int_expr(g, sb, rng, false)));
        }
      }
      if (chance(rng, 0.2)) sb.writes.push_back("write " + own + " := " + std::to_string(s + 1));
      if (cfg.adversarial && chance(rng, 0.05)) {
        // Clashing genuine writes: the step can never fire.
        sb.writes.push_back("write " + own + " := 1");
        sb.writes.push_back("write " + own + " := 2");
      }
      out += "  step:\n";
      if (!sb.reads.empty()) {
        out += "    read";
        for (const auto& r : sb.reads) out += " " + r.str();
        out += "\n";
      }
      for (const auto& w : sb.writes) out += "    " + w + "\n";
    }
  }
  return out;
}

std::string cross_lock_workload(std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x63726f7373ULL));
  auto v = [&] { return std::to_string(between(rng, 1, 99)); };
  return "init /x = 0\n"
         "init /y = 0\n"
         "\n"
         "machine M1\n"
         "  shared /x /y\n"
         "  step:\n"
         "    write /x := " + v() + "\n"
         "  step:\n"
         "    write /y := " + v() + "\n"
         "\n"
         "machine M2\n"
         "  shared /x /y\n"
         "  step:\n"
         "    write /y := " + v() + "\n"
         "  step:\n"
         "    write /x := " + v() + "\n";
}

}  // namespace mltx
