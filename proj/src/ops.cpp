#include "mltx/ops.hpp"

#include <algorithm>
#include <stdexcept>

namespace mltx {

// ---------------------------------------------------------------------------
// LockMode

LockMode LockMode::parse(const std::string& text) {
  if (text == "Read") return read();
  if (text == "Write") return write();
  if (text == "temp") return temp();
  if (!OperatorRegistry::builtin().contains(text)) throw UnknownOperator(text);
  return op(text);
}

std::string LockMode::str() const {
  switch (kind_) {
    case LockKind::Read: return "Read";
    case LockKind::Write: return "Write";
    case LockKind::Temp: return "temp";
    case LockKind::Op: return op_;
  }
  return {};
}

// ---------------------------------------------------------------------------
// UTF-8 helpers

namespace {

// Byte offsets at which code points start; throws on malformed input.
std::vector<std::size_t> code_point_starts(const std::string& s) {
  std::vector<std::size_t> starts;
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    if (c < 0x80) len = 1;
    else if ((c >> 5) == 0x6) len = 2;
    else if ((c >> 4) == 0xe) len = 3;
    else if ((c >> 3) == 0x1e) len = 4;
    else throw InvalidArgument("malformed UTF-8 string");
    if (i + len > s.size()) throw InvalidArgument("truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) {
        throw InvalidArgument("malformed UTF-8 continuation byte");
      }
    }
    starts.push_back(i);
    i += len;
  }
  return starts;
}

std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}

std::int64_t wrap_neg(std::int64_t a) {
  return static_cast<std::int64_t>(0ULL - static_cast<std::uint64_t>(a));
}

std::int64_t int_operand(const Value& v, const char* op, const char* role) {
  if (!v.is_int()) {
    throw CarrierMismatch(std::string(op) + ": " + role + " must be an integer, got " +
                          v.kind_name());
  }
  return v.as_int();
}

const std::string& text_operand(const Value& v, const char* op, const char* role) {
  if (!v.is_string()) {
    throw CarrierMismatch(std::string(op) + ": " + role + " must be a string, got " +
                          v.kind_name());
  }
  return v.as_string();
}

Value sample_int(Rng& rng) {
  switch (below(rng, 4)) {
    case 0: return Value(static_cast<std::int64_t>(rng()));
    case 1: return Value(between(rng, -3, 3));
    default: return Value(between(rng, -1000, 1000));
  }
}

Value sample_text(Rng& rng) {
  static const char* const pieces[] = {"a", "b", "z", "0", " ", "_", "\xc3\xa9", "\xe2\x82\xac",
                                       "\xf0\x9f\x98\x80"};
  std::string s;
  auto n = below(rng, 7);
  for (std::uint64_t i = 0; i < n; ++i) s += pieces[below(rng, std::size(pieces))];
  return Value(std::move(s));
}

std::vector<OperatorDef> builtin_defs() {
  std::vector<OperatorDef> defs;

  defs.push_back(OperatorDef{
      .name = "add",
      .carrier = Carrier::Integer,
      .apply = [](const Value& w, const Value& v) {
        return Value(wrap_add(int_operand(w, "add", "value"), int_operand(v, "add", "argument")));
      },
      .inverse = [](const Value& v) {
        return InversePair{"add", Value(wrap_neg(int_operand(v, "add", "argument")))};
      },
      .compatible_with = {"add"},
      .requestable = true,
      .sample_arg = sample_int,
  });

  defs.push_back(OperatorDef{
      .name = "xor",
      .carrier = Carrier::Integer,
      .apply = [](const Value& w, const Value& v) {
        return Value(int_operand(w, "xor", "value") ^ int_operand(v, "xor", "argument"));
      },
      .inverse = [](const Value& v) {
        int_operand(v, "xor", "argument");
        return InversePair{"xor", v};
      },
      .compatible_with = {"xor"},
      .requestable = true,
      .sample_arg = sample_int,
  });

  // Restricted to a sign flip so that the inverse exists for every value.
  auto check_sign = [](const Value& v) {
    auto a = int_operand(v, "mul", "argument");
    if (a != 1 && a != -1) throw InvalidArgument("mul: argument must be 1 or -1");
    return a;
  };
  defs.push_back(OperatorDef{
      .name = "mul",
      .carrier = Carrier::Integer,
      .apply = [check_sign](const Value& w, const Value& v) {
        auto base = int_operand(w, "mul", "value");
        return Value(check_sign(v) == 1 ? base : wrap_neg(base));
      },
      .inverse = [check_sign](const Value& v) {
        check_sign(v);
        return InversePair{"mul", v};
      },
      .compatible_with = {"mul"},
      .requestable = true,
      .sample_arg = [](Rng& rng) { return Value(below(rng, 2) == 0 ? std::int64_t{1} : std::int64_t{-1}); },
  });

  defs.push_back(OperatorDef{
      .name = "append",
      .carrier = Carrier::Text,
      .apply = [](const Value& w, const Value& v) {
        const auto& base = text_operand(w, "append", "value");
        const auto& tail = text_operand(v, "append", "argument");
        code_point_starts(tail);
        return Value(base + tail);
      },
      .inverse = [](const Value& v) {
        const auto& tail = text_operand(v, "append", "argument");
        return InversePair{"chop", Value(static_cast<std::int64_t>(utf8_length(tail)))};
      },
      .compatible_with = {},
      .requestable = true,
      .sample_arg = sample_text,
  });

  defs.push_back(OperatorDef{
      .name = "chop",
      .carrier = Carrier::Text,
      .apply = [](const Value& w, const Value& v) {
        const auto& base = text_operand(w, "chop", "value");
        auto k = int_operand(v, "chop", "argument");
        auto starts = code_point_starts(base);
        if (k < 0 || static_cast<std::size_t>(k) > starts.size()) {
          throw InvalidArgument("chop: cannot remove " + std::to_string(k) + " code points from a string of " +
                                std::to_string(starts.size()));
        }
        std::size_t keep = starts.size() - static_cast<std::size_t>(k);
        return Value(base.substr(0, keep == starts.size() ? base.size() : starts[keep]));
      },
      .inverse = {},
      .compatible_with = {},
      .requestable = false,
      .sample_arg = [](Rng& rng) { return Value(between(rng, 0, 2)); },
  });

  return defs;
}

}  // namespace

std::size_t utf8_length(const std::string& s) { return code_point_starts(s).size(); }

// ---------------------------------------------------------------------------
// Registry

OperatorRegistry::OperatorRegistry(std::vector<OperatorDef> defs, std::uint64_t validation_seed) {
  for (auto& d : defs) {
    if (!is_identifier(d.name)) throw std::invalid_argument("invalid operator name '" + d.name + "'");
    std::string name = d.name;
    if (!defs_.emplace(name, std::move(d)).second) {
      throw std::invalid_argument("duplicate operator '" + name + "'");
    }
  }
  for (const auto& [name, d] : defs_) {
    for (const auto& other : d.compatible_with) {
      auto it = defs_.find(other);
      if (it == defs_.end() || !it->second.compatible_with.contains(name)) {
        throw std::invalid_argument("compatibility of '" + name + "' with '" + other +
                                    "' is not declared symmetrically");
      }
    }
  }

  constexpr int kTrials = 64;
  Rng rng(validation_seed);
  for (const auto& [name, d] : defs_) {
    if (!d.inverse) continue;
    for (int t = 0; t < kTrials; ++t) {
      Value w = sample_base(name, rng);
      Value v = d.sample_arg(rng);
      auto [inv_op, inv_arg] = d.inverse(v);
      if (!contains(inv_op) || apply(inv_op, apply(name, w, v), inv_arg) != w) {
        throw std::invalid_argument("operator '" + name + "' violates the inverse postulate at w=" +
                                    to_literal(w) + ", v=" + to_literal(v));
      }
    }
  }
  for (const auto& [a, da] : defs_) {
    for (const auto& b : da.compatible_with) {
      const auto& db = defs_.at(b);
      if (da.carrier != db.carrier) {
        throw std::invalid_argument("operators '" + a + "' and '" + b + "' have different carriers");
      }
      for (int t = 0; t < kTrials; ++t) {
        Value w = sample_base(a, rng);
        Value va = da.sample_arg(rng);
        Value vb = db.sample_arg(rng);
        if (apply(b, apply(a, w, va), vb) != apply(a, apply(b, w, vb), va)) {
          throw std::invalid_argument("operators '" + a + "' and '" + b +
                                      "' are declared compatible but do not commute at w=" +
                                      to_literal(w));
        }
      }
    }
  }
}

const OperatorRegistry& OperatorRegistry::builtin() {
  static const OperatorRegistry registry(builtin_defs());
  return registry;
}

bool OperatorRegistry::requestable(const std::string& name) const {
  auto it = defs_.find(name);
  return it != defs_.end() && it->second.requestable;
}

const OperatorDef& OperatorRegistry::def(const std::string& name) const {
  auto it = defs_.find(name);
  if (it == defs_.end()) throw UnknownOperator(name);
  return it->second;
}

std::vector<std::string> OperatorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, d] : defs_) out.push_back(name);
  return out;
}

Value OperatorRegistry::apply(const std::string& name, const Value& w, const Value& v) const {
  return def(name).apply(w, v);
}

InversePair OperatorRegistry::inverse(const std::string& name, const Value& v) const {
  const auto& d = def(name);
  if (!d.inverse) throw InvalidArgument("operator '" + name + "' has no registered inverse");
  return d.inverse(v);
}

bool OperatorRegistry::compatible(const std::string& a, const std::string& b) const {
  auto it = defs_.find(a);
  return it != defs_.end() && it->second.compatible_with.contains(b);
}

Value OperatorRegistry::sample_base(const std::string& name, Rng& rng) const {
  return def(name).carrier == Carrier::Integer ? sample_int(rng) : sample_text(rng);
}

Value OperatorRegistry::sample_arg(const std::string& name, Rng& rng) const {
  return def(name).sample_arg(rng);
}

Value apply_op(const std::string& op, const Value& w, const Value& v) {
  return OperatorRegistry::builtin().apply(op, w, v);
}

InversePair inverse_op(const std::string& op, const Value& v) {
  return OperatorRegistry::builtin().inverse(op, v);
}

// ---------------------------------------------------------------------------
// Compatibility

bool compatible(const LockMode& a, const LockMode& b) {
  using K = LockKind;
  if (a.kind() == K::Write || b.kind() == K::Write) return false;
  if (a.kind() == K::Read || b.kind() == K::Read) return a.kind() == K::Read && b.kind() == K::Read;
  if (a.kind() == K::Temp || b.kind() == K::Temp) return true;  // temp/temp, temp/op
  return OperatorRegistry::builtin().compatible(a.op_name(), b.op_name());
}

bool check_multiset_compatible(std::span<const PartialUpdate> ps) {
  const auto& reg = OperatorRegistry::builtin();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!reg.contains(ps[i].op)) return false;
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      if (!reg.compatible(ps[i].op, ps[j].op)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Aggregation

AggregateResult aggregate(const Store& s, std::span<const GenuineUpdate> genuine,
                          std::span<const PartialUpdate> partial) {
  AggregateResult result;
  auto fail = [&result](std::string reason) {
    result.updates.clear();
    result.inconsistency = std::move(reason);
    return result;
  };

  std::map<LocationPath, Value> assigned;
  for (const auto& g : genuine) {
    auto [it, inserted] = assigned.emplace(g.loc, g.val);
    if (!inserted && it->second != g.val) {
      return fail("clashing genuine updates at " + g.loc.str());
    }
  }

  std::map<LocationPath, std::vector<PartialUpdate>> by_loc;
  for (const auto& p : partial) by_loc[p.loc].push_back(p);

  for (const auto& [loc, ps] : by_loc) {
    if (assigned.contains(loc)) return fail("mixed genuine and partial updates at " + loc.str());
    if (!check_multiset_compatible(ps)) {
      return fail("operator-incompatible partial updates at " + loc.str());
    }
    try {
      Value v = s.eval(loc);
      for (const auto& p : ps) v = apply_op(p.op, v, p.arg);
      assigned.emplace(loc, std::move(v));
    } catch (const Error& e) {
      return fail("partial update at " + loc.str() + " failed: " + e.what());
    }
  }

  for (const auto& [loc, v] : assigned) {
    for (const auto& a : loc.ancestors()) {
      if (assigned.contains(a)) {
        return fail("subsumption clash between " + a.str() + " and " + loc.str());
      }
    }
  }

  result.updates.reserve(assigned.size());
  for (auto& [loc, v] : assigned) result.updates.push_back(GenuineUpdate{loc, std::move(v)});
  return result;
}

void apply_updates(Store& s, std::span<const GenuineUpdate> updates) {
  for (const auto& u : updates) s.assign(u.loc, u.val);
}

}  // namespace mltx
