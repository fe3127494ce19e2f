#include "mltx/values.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace mltx {

bool is_identifier(std::string_view s) noexcept {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
  });
}

LocationPath::LocationPath(std::vector<std::string> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw Error("location path must have at least one segment");
  for (const auto& s : segments_) {
    if (!is_identifier(s)) throw Error("invalid path segment '" + s + "'");
  }
}

LocationPath LocationPath::parse(std::string_view text) {
  if (text.empty() || text.front() != '/') {
    throw Error("location path must start with '/': '" + std::string(text) + "'");
  }
  std::vector<std::string> segs;
  std::size_t pos = 1;
  while (pos <= text.size()) {
    std::size_t next = text.find('/', pos);
    if (next == std::string_view::npos) next = text.size();
    segs.emplace_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
  return LocationPath(std::move(segs));
}

std::optional<LocationPath> LocationPath::parent() const {
  if (segments_.size() < 2) return std::nullopt;
  return LocationPath(std::vector<std::string>(segments_.begin(), segments_.end() - 1));
}

std::vector<LocationPath> LocationPath::ancestors() const {
  std::vector<LocationPath> out;
  for (std::size_t n = 1; n < segments_.size(); ++n) {
    out.emplace_back(std::vector<std::string>(segments_.begin(), segments_.begin() + n));
  }
  return out;
}

LocationPath LocationPath::child(std::string segment) const {
  auto segs = segments_;
  segs.push_back(std::move(segment));
  return LocationPath(std::move(segs));
}

std::string LocationPath::str() const {
  std::string out;
  for (const auto& s : segments_) {
    out += '/';
    out += s;
  }
  return out;
}

bool subsumes(const LocationPath& outer, const LocationPath& inner) noexcept {
  auto o = outer.segments();
  auto i = inner.segments();
  return o.size() < i.size() && std::equal(o.begin(), o.end(), i.begin());
}

bool overlaps(const LocationPath& a, const LocationPath& b) noexcept {
  return a == b || subsumes(a, b) || subsumes(b, a);
}

// ---------------------------------------------------------------------------
// Value

std::int64_t Value::as_int() const {
  if (const auto* p = std::get_if<std::int64_t>(&data)) return *p;
  throw TypeError(std::string("expected integer, got ") + kind_name());
}

const std::string& Value::as_string() const {
  if (const auto* p = std::get_if<std::string>(&data)) return *p;
  throw TypeError(std::string("expected string, got ") + kind_name());
}

bool Value::as_bool() const {
  if (const auto* p = std::get_if<bool>(&data)) return *p;
  throw TypeError(std::string("expected boolean, got ") + kind_name());
}

const Node& Value::as_node() const {
  if (const auto* p = std::get_if<Node>(&data)) return *p;
  throw TypeError(std::string("expected node, got ") + kind_name());
}

Node& Value::as_node() {
  if (auto* p = std::get_if<Node>(&data)) return *p;
  throw TypeError(std::string("expected node, got ") + kind_name());
}

const char* Value::kind_name() const noexcept {
  switch (data.index()) {
    case 0: return "integer";
    case 1: return "string";
    case 2: return "boolean";
    default: return "node";
  }
}

std::strong_ordering compare(const Value& a, const Value& b) {
  if (a.data.index() != b.data.index()) return a.data.index() <=> b.data.index();
  switch (a.data.index()) {
    case 0: return std::get<0>(a.data) <=> std::get<0>(b.data);
    case 1: return std::get<1>(a.data).compare(std::get<1>(b.data)) <=> 0;
    case 2: return std::get<2>(a.data) <=> std::get<2>(b.data);
    default: break;
  }
  const Node& x = std::get<Node>(a.data);
  const Node& y = std::get<Node>(b.data);
  auto i = x.begin();
  auto j = y.begin();
  for (; i != x.end() && j != y.end(); ++i, ++j) {
    if (auto c = i->first.compare(j->first) <=> 0; c != 0) return c;
    if (auto c = compare(i->second, j->second); c != 0) return c;
  }
  return x.size() <=> y.size();
}

namespace {

void append_quoted(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
}

void append_literal(std::string& out, const Value& v) {
  switch (v.data.index()) {
    case 0: out += std::to_string(std::get<0>(v.data)); return;
    case 1: append_quoted(out, std::get<1>(v.data)); return;
    case 2: out += std::get<2>(v.data) ? "true" : "false"; return;
    default: break;
  }
  const Node& n = std::get<Node>(v.data);
  out += '{';
  bool first = true;
  for (const auto& [k, child] : n) {
    if (!first) out += ", ";
    first = false;
    out += k;
    out += ": ";
    append_literal(out, child);
  }
  out += '}';
}

class LiteralParser {
 public:
  LiteralParser(std::string_view text, std::size_t& pos, int line, int column_base)
      : text_(text), pos_(pos), line_(line), column_base_(column_base) {}

  Value parse() {
    skip_ws();
    if (pos_ >= text_.size()) fail("expected a value");
    char c = text_[pos_];
    if (c == '{') return parse_node();
    if (c == '"') return Value(parse_string());
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c)) != 0) return Value(parse_int());
    std::string word = take_word();
    if (word == "true") return Value(true);
    if (word == "false") return Value(false);
    fail("unexpected token '" + word + "'");
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, line_, column_base_ + static_cast<int>(pos_));
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) {
      ++pos_;
    }
  }

  std::string take_word() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) != 0 || text_[pos_] == '_')) {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  std::int64_t parse_int() {
    std::size_t start = pos_;
    if (text_[pos_] == '-') ++pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0) {
      ++pos_;
    }
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("invalid integer literal");
    }
    return v;
  }

  std::string parse_string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= text_.size()) fail("unterminated string literal");
      char c = text_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= text_.size()) fail("unterminated escape");
      char e = text_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: --pos_; fail(std::string("unknown escape '\\") + e + "'");
      }
    }
  }

  Value parse_node() {
    ++pos_;  // '{'
    Node node;
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '}') {
      ++pos_;
      return Value(std::move(node));
    }
    while (true) {
      skip_ws();
      std::size_t key_pos = pos_;
      std::string key = take_word();
      if (key.empty()) fail("expected a key");
      skip_ws();
      if (pos_ >= text_.size() || text_[pos_] != ':') fail("expected ':' after key");
      ++pos_;
      Value child = parse();
      if (!node.emplace(key, std::move(child)).second) {
        pos_ = key_pos;
        fail("duplicate key '" + key + "'");
      }
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated node literal");
      if (text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (text_[pos_] == '}') {
        ++pos_;
        return Value(std::move(node));
      }
      fail("expected ',' or '}'");
    }
  }

  std::string_view text_;
  std::size_t& pos_;
  int line_;
  int column_base_;
};

}  // namespace

std::string to_literal(const Value& v) {
  std::string out;
  append_literal(out, v);
  return out;
}

Value parse_value_at(std::string_view text, std::size_t& pos, int line, int column_base) {
  return LiteralParser(text, pos, line, column_base).parse();
}

Value parse_value(std::string_view text) {
  std::size_t pos = 0;
  Value v = parse_value_at(text, pos, 1, 1);
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])) != 0) ++pos;
  if (pos != text.size()) throw ParseError("trailing characters after value", 1, static_cast<int>(pos) + 1);
  return v;
}

// ---------------------------------------------------------------------------
// Classification & Store

namespace {

bool covered_by(const std::set<LocationPath>& declared, const LocationPath& l) {
  // Candidates are l itself and its ancestors.
  if (declared.contains(l)) return true;
  for (const auto& a : l.ancestors()) {
    if (declared.contains(a)) return true;
  }
  return false;
}

}  // namespace

bool Classification::is_shared(const LocationPath& l) const { return covered_by(shared, l); }
bool Classification::is_monitored(const LocationPath& l) const { return covered_by(monitored, l); }
bool Classification::is_output(const LocationPath& l) const { return covered_by(output, l); }

const Value& Store::eval(const LocationPath& l) const {
  const Node* node = &root_;
  const Value* cur = nullptr;
  for (const auto& seg : l.segments()) {
    if (node == nullptr) throw UnresolvedLocation(l.str());
    auto it = node->find(seg);
    if (it == node->end()) throw UnresolvedLocation(l.str());
    cur = &it->second;
    node = std::get_if<Node>(&cur->data);
  }
  return *cur;
}

bool Store::resolves(const LocationPath& l) const noexcept {
  const Node* node = &root_;
  for (const auto& seg : l.segments()) {
    if (node == nullptr) return false;
    auto it = node->find(seg);
    if (it == node->end()) return false;
    node = std::get_if<Node>(&it->second.data);
  }
  return true;
}

void Store::assign(const LocationPath& l, Value v) {
  Node* node = &root_;
  auto segs = l.segments();
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    auto it = node->find(segs[i]);
    if (it == node->end()) throw UnresolvedLocation(l.str());
    node = std::get_if<Node>(&it->second.data);
    if (node == nullptr) throw UnresolvedLocation(l.str());
  }
  (*node)[segs.back()] = std::move(v);
}

void Store::set_classification(const std::string& machine, Classification c) {
  classes_[machine] = std::move(c);
}

const Classification& Store::classification(const std::string& machine) const {
  static const Classification empty;
  auto it = classes_.find(machine);
  return it == classes_.end() ? empty : it->second;
}

const Value& eval(const LocationPath& l, const Store& s) { return s.eval(l); }

Store write_genuine(Store s, const LocationPath& l, Value v) {
  s.assign(l, std::move(v));
  return s;
}

}  // namespace mltx
