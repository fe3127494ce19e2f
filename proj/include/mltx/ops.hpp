#pragma once

// Partial-update operators, lock modes and aggregation.
//
// Every registered operator satisfies the inverse operation postulate: for an
// argument v with inverse pair (op', v'), op'(op(w, v), v') == w for all w in
// the carrier. Operators declared compatible commute on every carrier value.
// Both properties are spot-checked when a registry is built.

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mltx/rng.hpp"
#include "mltx/values.hpp"

namespace mltx {

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class CarrierMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownOperator : public Error {
 public:
  explicit UnknownOperator(const std::string& name) : Error("unknown operator '" + name + "'") {}
};

enum class LockKind : std::uint8_t { Read, Write, Temp, Op };

class LockMode {
 public:
  static LockMode read() { return LockMode(LockKind::Read, {}); }
  static LockMode write() { return LockMode(LockKind::Write, {}); }
  static LockMode temp() { return LockMode(LockKind::Temp, {}); }
  static LockMode op(std::string name) { return LockMode(LockKind::Op, std::move(name)); }

  /// Accepts `Read`, `Write`, `temp`, or an operator name.
  static LockMode parse(const std::string& text);

  LockKind kind() const noexcept { return kind_; }
  const std::string& op_name() const noexcept { return op_; }
  bool is_temp() const noexcept { return kind_ == LockKind::Temp; }

  std::string str() const;

  friend bool operator==(const LockMode&, const LockMode&) = default;
  friend std::strong_ordering operator<=>(const LockMode&, const LockMode&) = default;

 private:
  LockMode(LockKind k, std::string op) : kind_(k), op_(std::move(op)) {}
  LockKind kind_;
  std::string op_;
};

struct GenuineUpdate {
  LocationPath loc;
  Value val;

  friend bool operator==(const GenuineUpdate& a, const GenuineUpdate& b) {
    return a.loc == b.loc && a.val == b.val;
  }
  friend bool operator<(const GenuineUpdate& a, const GenuineUpdate& b) {
    if (a.loc != b.loc) return a.loc < b.loc;
    return a.val < b.val;
  }
};

struct PartialUpdate {
  LocationPath loc;
  std::string op;
  Value arg;

  friend bool operator==(const PartialUpdate& a, const PartialUpdate& b) {
    return a.loc == b.loc && a.op == b.op && a.arg == b.arg;
  }
  friend bool operator<(const PartialUpdate& a, const PartialUpdate& b) {
    if (a.loc != b.loc) return a.loc < b.loc;
    if (a.op != b.op) return a.op < b.op;
    return a.arg < b.arg;
  }
};

struct InversePair {
  std::string op;
  Value arg;

  friend bool operator==(const InversePair& a, const InversePair& b) {
    return a.op == b.op && a.arg == b.arg;
  }
};

enum class Carrier : std::uint8_t { Integer, Text };

struct OperatorDef {
  std::string name;
  Carrier carrier = Carrier::Integer;
  std::function<Value(const Value& current, const Value& arg)> apply;
  /// Empty when the operator has no inverse (it is then only usable as one).
  std::function<InversePair(const Value& arg)> inverse;
  std::set<std::string> compatible_with;
  /// Whether workloads may use the operator in partial update instructions.
  bool requestable = true;
  /// Draws a valid argument; used by registry validation and property tests.
  std::function<Value(Rng&)> sample_arg;
};

class OperatorRegistry {
 public:
  /// Validates symmetry of compatibility, the inverse postulate and pairwise
  /// order-independence on random samples. Throws std::invalid_argument.
  explicit OperatorRegistry(std::vector<OperatorDef> defs, std::uint64_t validation_seed = 1);

  /// add, xor, mul, append, chop.
  static const OperatorRegistry& builtin();

  bool contains(const std::string& name) const { return defs_.contains(name); }
  bool requestable(const std::string& name) const;
  const OperatorDef& def(const std::string& name) const;
  std::vector<std::string> names() const;

  Value apply(const std::string& name, const Value& w, const Value& v) const;
  InversePair inverse(const std::string& name, const Value& v) const;
  bool compatible(const std::string& a, const std::string& b) const;

  /// A random carrier value for `name`'s carrier.
  Value sample_base(const std::string& name, Rng& rng) const;
  Value sample_arg(const std::string& name, Rng& rng) const;

 private:
  std::map<std::string, OperatorDef> defs_;
};

/// Number of UTF-8 code points; throws InvalidArgument on malformed input.
std::size_t utf8_length(const std::string& s);

// Convenience wrappers over the builtin registry.
Value apply_op(const std::string& op, const Value& w, const Value& v);
InversePair inverse_op(const std::string& op, const Value& v);

/// Lock-mode compatibility between different machines. Symmetric.
bool compatible(const LockMode& a, const LockMode& b);

/// All operator pairs in the multiset are declared mutually compatible.
bool check_multiset_compatible(std::span<const PartialUpdate> ps);

struct AggregateResult {
  std::vector<GenuineUpdate> updates;  // sorted by location
  std::optional<std::string> inconsistency;

  bool consistent() const noexcept { return !inconsistency.has_value(); }
};

/// Folds genuine and partial updates into one genuine update set, or reports
/// why no consistent set exists.
AggregateResult aggregate(const Store& s, std::span<const GenuineUpdate> genuine,
                          std::span<const PartialUpdate> partial);

/// Applies a consistent update set in place.
void apply_updates(Store& s, std::span<const GenuineUpdate> updates);

}  // namespace mltx
