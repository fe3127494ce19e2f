#pragma once

// Hierarchical store: path-addressed locations over tree-shaped values.
//
// A location is a non-empty sequence of identifier segments. The head segment
// names the "function", the rest address into it like array indices. A path
// strictly prefixing another subsumes it: the value at the shorter path
// (a page, a subtree) uniquely determines the value at the longer one.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mltx {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnresolvedLocation : public Error {
 public:
  explicit UnresolvedLocation(const std::string& path)
      : Error("unresolved location " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class TypeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string message, int line, int column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// True iff `s` is a valid path segment / identifier: `[A-Za-z0-9_]+`.
bool is_identifier(std::string_view s) noexcept;

class LocationPath {
 public:
  explicit LocationPath(std::vector<std::string> segments);

  /// Parses the text form `/seg1/seg2/...`.
  static LocationPath parse(std::string_view text);

  std::span<const std::string> segments() const noexcept { return segments_; }
  std::size_t depth() const noexcept { return segments_.size(); }
  const std::string& head() const noexcept { return segments_.front(); }

  std::optional<LocationPath> parent() const;
  /// Strict ancestors, outermost first.
  std::vector<LocationPath> ancestors() const;
  LocationPath child(std::string segment) const;

  std::string str() const;

  friend bool operator==(const LocationPath&, const LocationPath&) = default;
  friend std::strong_ordering operator<=>(const LocationPath&, const LocationPath&) = default;

 private:
  std::vector<std::string> segments_;
};

/// Strict ancestry: `outer` is a proper prefix of `inner`.
bool subsumes(const LocationPath& outer, const LocationPath& inner) noexcept;

/// Equal, or one subsumes the other.
bool overlaps(const LocationPath& a, const LocationPath& b) noexcept;

struct Value;
using Node = std::map<std::string, Value>;

struct Value {
  std::variant<std::int64_t, std::string, bool, Node> data;

  Value() : data(Node{}) {}
  Value(std::int64_t i) : data(i) {}  // NOLINT(google-explicit-constructor)
  Value(int i) : data(static_cast<std::int64_t>(i)) {}  // NOLINT
  Value(std::string s) : data(std::move(s)) {}  // NOLINT
  Value(const char* s) : data(std::string(s)) {}  // NOLINT
  Value(bool b) : data(b) {}  // NOLINT
  Value(Node n) : data(std::move(n)) {}  // NOLINT

  bool is_int() const noexcept { return std::holds_alternative<std::int64_t>(data); }
  bool is_string() const noexcept { return std::holds_alternative<std::string>(data); }
  bool is_bool() const noexcept { return std::holds_alternative<bool>(data); }
  bool is_node() const noexcept { return std::holds_alternative<Node>(data); }
  bool is_scalar() const noexcept { return !is_node(); }

  // Accessors throw TypeError on a kind mismatch.
  std::int64_t as_int() const;
  const std::string& as_string() const;
  bool as_bool() const;
  const Node& as_node() const;
  Node& as_node();

  const char* kind_name() const noexcept;
};

std::strong_ordering compare(const Value& a, const Value& b);
inline bool operator==(const Value& a, const Value& b) { return compare(a, b) == 0; }
inline bool operator<(const Value& a, const Value& b) { return compare(a, b) < 0; }

/// Canonical literal form: `{a: 1, b: "x", c: true}` with keys in order.
std::string to_literal(const Value& v);

/// Parses a store literal; errors carry a 1-based column (line 1).
Value parse_value(std::string_view text);

/// Parses a literal starting at `pos`, advancing it past the literal.
/// Used by the workload parser to embed literals in expressions.
Value parse_value_at(std::string_view text, std::size_t& pos, int line, int column_base);

/// Per-machine location classes. A declared path covers itself and every
/// descendant location.
struct Classification {
  std::set<LocationPath> shared;
  std::set<LocationPath> monitored;
  std::set<LocationPath> output;

  bool is_shared(const LocationPath& l) const;
  bool is_monitored(const LocationPath& l) const;
  bool is_output(const LocationPath& l) const;
  /// Reads of these locations need a lock.
  bool lock_on_read(const LocationPath& l) const { return is_shared(l) || is_monitored(l); }
  /// Writes to these locations need a lock.
  bool lock_on_write(const LocationPath& l) const { return is_shared(l) || is_output(l); }
  bool covers(const LocationPath& l) const { return is_shared(l) || is_monitored(l) || is_output(l); }
};

class Store {
 public:
  Store() = default;
  explicit Store(Node root) : root_(std::move(root)) {}

  const Node& root() const noexcept { return root_; }
  Value root_value() const { return Value(root_); }
  void set_root(Node root) { root_ = std::move(root); }

  /// Throws UnresolvedLocation if any segment is missing.
  const Value& eval(const LocationPath& l) const;
  bool resolves(const LocationPath& l) const noexcept;

  /// Replaces the subtree at `l`. The parent must resolve to a node.
  void assign(const LocationPath& l, Value v);

  void set_classification(const std::string& machine, Classification c);
  /// Empty classification for unknown machines.
  const Classification& classification(const std::string& machine) const;
  const std::map<std::string, Classification>& classifications() const noexcept {
    return classes_;
  }

  friend bool operator==(const Store& a, const Store& b) {
    return Value(a.root_) == Value(b.root_);
  }

 private:
  Node root_;
  std::map<std::string, Classification> classes_;
};

const Value& eval(const LocationPath& l, const Store& s);
Store write_genuine(Store s, const LocationPath& l, Value v);

}  // namespace mltx
