#include "mltx/workload.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mltx/rng.hpp"

namespace mltx {

namespace {

constexpr std::array<std::string_view, 6> kReservedAgents = {
    "TaCtl", "LockHandler", "DeadlockHandler", "Recovery", "Commit", "Abort"};

std::int64_t wrap(std::uint64_t v) { return static_cast<std::int64_t>(v); }

// ---------------------------------------------------------------------------
// Expression parsing

enum class Tok : std::uint8_t { Int, Str, Ident, Path, Punct, End };

struct Token {
  Tok kind;
  std::string text;
  int column;
  std::size_t offset;
};

class ExprParser {
 public:
  ExprParser(std::string_view text, int line, int column_base, std::size_t& choose_sites)
      : text_(text), line_(line), column_base_(column_base), choose_sites_(choose_sites) {
    advance();
  }

  ExprPtr parse_full() {
    ExprPtr e = parse_expr();
    if (tok_.kind != Tok::End) fail("unexpected '" + tok_.text + "'");
    return e;
  }

  const std::vector<std::pair<LocationPath, int>>& referenced() const { return referenced_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, tok_.column); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) ++pos_;
  }

  void advance() {
    skip_ws();
    int col = column_base_ + static_cast<int>(pos_);
    if (pos_ >= text_.size()) {
      tok_ = {Tok::End, "end of line", col, pos_};
      return;
    }
    std::size_t start = pos_;
    char c = text_[pos_];
    auto is_word = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) != 0 || ch == '_'; };
    if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0) ++pos_;
      tok_ = {Tok::Int, std::string(text_.substr(start, pos_ - start)), col, start};
    } else if (std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_') {
      while (pos_ < text_.size() && is_word(text_[pos_])) ++pos_;
      tok_ = {Tok::Ident, std::string(text_.substr(start, pos_ - start)), col, start};
    } else if (c == '/') {
      ++pos_;
      while (pos_ < text_.size() && (is_word(text_[pos_]) || text_[pos_] == '/')) ++pos_;
      tok_ = {Tok::Path, std::string(text_.substr(start, pos_ - start)), col, start};
    } else if (c == '"') {
      tok_ = {Tok::Str, "\"", col, start};  // the literal parser consumes it
    } else if (c == '{') {
      tok_ = {Tok::Punct, "{", col, start};
    } else {
      static constexpr std::array<std::string_view, 6> two = {"==", "!=", "<=", ">=", ":=", "->"};
      for (auto t : two) {
        if (text_.substr(pos_, 2) == t) {
          pos_ += 2;
          tok_ = {Tok::Punct, std::string(t), col, start};
          return;
        }
      }
      ++pos_;
      tok_ = {Tok::Punct, std::string(1, c), col, start};
    }
  }

  bool is_punct(std::string_view p) const { return tok_.kind == Tok::Punct && tok_.text == p; }
  bool is_ident(std::string_view w) const { return tok_.kind == Tok::Ident && tok_.text == w; }

  void expect_punct(std::string_view p) {
    if (!is_punct(p)) fail("expected '" + std::string(p) + "'");
    advance();
  }

  void expect_ident(std::string_view w) {
    if (!is_ident(w)) fail("expected '" + std::string(w) + "'");
    advance();
  }

  static ExprPtr make(auto node) { return std::make_shared<const Expr>(Expr{std::move(node)}); }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_sum();
    static const std::array<std::pair<std::string_view, expr::BinOp>, 6> cmp = {{
        {"==", expr::BinOp::Eq}, {"!=", expr::BinOp::Ne}, {"<=", expr::BinOp::Le},
        {">=", expr::BinOp::Ge}, {"<", expr::BinOp::Lt},  {">", expr::BinOp::Gt},
    }};
    for (const auto& [sym, op] : cmp) {
      if (is_punct(sym)) {
        advance();
        ExprPtr rhs = parse_sum();
        return make(expr::Binary{op, lhs, rhs});
      }
    }
    return lhs;
  }

  ExprPtr parse_sum() {
    ExprPtr lhs = parse_product();
    while (is_punct("+") || is_punct("-")) {
      auto op = is_punct("+") ? expr::BinOp::Add : expr::BinOp::Sub;
      advance();
      lhs = make(expr::Binary{op, lhs, parse_product()});
    }
    return lhs;
  }

  ExprPtr parse_product() {
    ExprPtr lhs = parse_unary();
    while (is_punct("*")) {
      advance();
      lhs = make(expr::Binary{expr::BinOp::Mul, lhs, parse_unary()});
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (is_punct("-")) {
      advance();
      // Fold negative integer literals so INT64_MIN is expressible.
      if (tok_.kind == Tok::Int) {
        std::string digits = "-" + tok_.text;
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec != std::errc() || ptr != digits.data() + digits.size()) fail("integer literal out of range");
        advance();
        return make(expr::Literal{Value(v)});
      }
      return make(expr::Negate{parse_unary()});
    }
    return parse_primary();
  }

  ExprPtr parse_primary() {
    switch (tok_.kind) {
      case Tok::Int: {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(tok_.text.data(), tok_.text.data() + tok_.text.size(), v);
        if (ec != std::errc() || ptr != tok_.text.data() + tok_.text.size()) fail("integer literal out of range");
        advance();
        return make(expr::Literal{Value(v)});
      }
      case Tok::Str: {
        std::size_t p = tok_.offset;
        Value v = parse_value_at(text_, p, line_, column_base_);
        pos_ = p;
        advance();
        return make(expr::Literal{std::move(v)});
      }
      case Tok::Punct:
        if (is_punct("{")) {
          std::size_t p = tok_.offset;
          Value v = parse_value_at(text_, p, line_, column_base_);
          pos_ = p;
          advance();
          return make(expr::Literal{std::move(v)});
        }
        if (is_punct("(")) {
          advance();
          ExprPtr inner = parse_expr();
          expect_punct(")");
          return inner;
        }
        break;
      case Tok::Ident: {
        if (is_ident("true") || is_ident("false")) {
          bool b = tok_.text == "true";
          advance();
          return make(expr::Literal{Value(b)});
        }
        if (is_ident("read")) {
          advance();
          expect_punct("(");
          if (tok_.kind != Tok::Path) fail("expected a location path");
          int col = tok_.column;
          LocationPath path = parse_path(tok_.text);
          advance();
          expect_punct(")");
          referenced_.emplace_back(path, col);
          return make(expr::Read{std::move(path)});
        }
        if (is_ident("choose")) {
          advance();
          expect_punct("(");
          expr::Choose ch{choose_sites_++, {}};
          ch.options.push_back(parse_expr());
          while (is_punct(",")) {
            advance();
            ch.options.push_back(parse_expr());
          }
          expect_punct(")");
          return make(std::move(ch));
        }
        if (is_ident("if")) {
          advance();
          ExprPtr c = parse_expr();
          expect_ident("then");
          ExprPtr t = parse_expr();
          expect_ident("else");
          ExprPtr e = parse_expr();
          return make(expr::If{c, t, e});
        }
        break;
      }
      default: break;
    }
    fail("unexpected '" + tok_.text + "'");
  }

  LocationPath parse_path(const std::string& text) const {
    try {
      return LocationPath::parse(text);
    } catch (const Error& e) {
      fail(e.what());
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
  int column_base_;
  std::size_t& choose_sites_;
  Token tok_{};
  std::vector<std::pair<LocationPath, int>> referenced_;
};

// ---------------------------------------------------------------------------
// Line-level parsing

struct Cursor {
  std::string_view line;
  std::size_t pos = 0;
  int line_no = 0;

  int column() const { return static_cast<int>(pos) + 1; }

  void skip_ws() {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos])) != 0) ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= line.size();
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_no, column()); }

  std::string word() {
    skip_ws();
    std::size_t start = pos;
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos])) == 0) ++pos;
    return std::string(line.substr(start, pos - start));
  }

  std::pair<LocationPath, int> path() {
    skip_ws();
    int col = column();
    std::string w = word();
    if (w.empty()) fail("expected a location path");
    try {
      return {LocationPath::parse(w), col};
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no, col);
    }
  }
};

std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

struct PendingPath {
  LocationPath path;
  int line;
  int column;
};

struct MachineDraft {
  Program program;
  int line = 0;
  std::vector<PendingPath> declared;
  // Every location a step touches, with its source position.
  std::vector<PendingPath> touched;
};

}  // namespace

bool is_reserved_agent_name(std::string_view name) {
  return std::find(kReservedAgents.begin(), kReservedAgents.end(), name) != kReservedAgents.end();
}

const Program& Workload::program(const std::string& machine) const {
  for (const auto& p : programs) {
    if (p.machine_id == machine) return p;
  }
  throw Error("unknown machine '" + machine + "'");
}

bool Workload::has_machine(const std::string& machine) const {
  return std::any_of(programs.begin(), programs.end(),
                     [&](const Program& p) { return p.machine_id == machine; });
}

std::size_t Workload::total_steps() const {
  std::size_t n = 0;
  for (const auto& p : programs) n += p.steps.size();
  return n;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

Workload parse_workload(std::string_view text) {
  Workload wl;
  wl.source = std::string(text);
  wl.digest = sha256_hex(text);

  std::vector<MachineDraft> drafts;
  std::set<LocationPath> initialised;
  Store store;

  MachineDraft* machine = nullptr;
  Step* step = nullptr;

  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);

    Cursor cur{strip_comment(raw), 0, line_no};
    if (cur.at_end()) continue;
    int kw_col = cur.column();
    std::string kw = cur.word();

    if (kw == "machine") {
      std::string id = cur.word();
      if (!is_identifier(id)) cur.fail("machine id must match [A-Za-z0-9_]+");
      if (is_reserved_agent_name(id)) cur.fail("machine id '" + id + "' is reserved");
      for (const auto& d : drafts) {
        if (d.program.machine_id == id) cur.fail("duplicate machine '" + id + "'");
      }
      if (!cur.at_end()) cur.fail("unexpected text after machine id");
      drafts.emplace_back();
      machine = &drafts.back();
      machine->program.machine_id = id;
      machine->line = line_no;
      step = nullptr;
    } else if (kw == "shared" || kw == "monitored" || kw == "output") {
      if (machine == nullptr) throw ParseError("'" + kw + "' outside a machine block", line_no, kw_col);
      auto& cls = machine->program.classes;
      auto& target = kw == "shared" ? cls.shared : kw == "monitored" ? cls.monitored : cls.output;
      if (cur.at_end()) cur.fail("expected at least one location path");
      while (!cur.at_end()) {
        auto [p, col] = cur.path();
        target.insert(p);
        machine->declared.push_back({p, line_no, col});
      }
    } else if (kw == "init") {
      auto [p, col] = cur.path();
      cur.skip_ws();
      if (cur.pos >= cur.line.size() || cur.line[cur.pos] != '=') cur.fail("expected '='");
      ++cur.pos;
      std::size_t vpos = cur.pos;
      Value v = parse_value_at(cur.line, vpos, line_no, 1);
      cur.pos = vpos;
      if (!cur.at_end()) cur.fail("unexpected text after value");
      if (initialised.contains(p) || store.resolves(p)) {
        throw ParseError("location " + p.str() + " initialised twice", line_no, col);
      }
      auto parent = p.parent();
      if (parent && (!store.resolves(*parent) || !store.eval(*parent).is_node())) {
        throw ParseError("parent of " + p.str() + " is not an initialised node", line_no, col);
      }
      store.assign(p, std::move(v));
      initialised.insert(p);
    } else if (kw == "step:" || kw == "step") {
      if (kw == "step") {
        cur.skip_ws();
        if (cur.pos >= cur.line.size() || cur.line[cur.pos] != ':') cur.fail("expected ':' after step");
        ++cur.pos;
      }
      if (machine == nullptr) throw ParseError("step outside a machine block", line_no, kw_col);
      if (!cur.at_end()) cur.fail("unexpected text after 'step:'");
      machine->program.steps.emplace_back();
      step = &machine->program.steps.back();
      step->line = line_no;
    } else if (kw == "read") {
      if (step == nullptr) throw ParseError("'read' outside a step", line_no, kw_col);
      if (cur.at_end()) cur.fail("expected at least one location path");
      while (!cur.at_end()) {
        auto [p, col] = cur.path();
        if (std::find(step->reads.begin(), step->reads.end(), p) == step->reads.end()) {
          step->reads.push_back(p);
        }
        machine->touched.push_back({p, line_no, col});
      }
    } else if (kw == "write" || kw == "partial") {
      if (step == nullptr) throw ParseError("'" + kw + "' outside a step", line_no, kw_col);
      auto [target, target_col] = cur.path();
      WriteInstr w{.partial = kw == "partial", .target = target, .op = {}, .value = {}, .line = line_no};
      if (w.partial) {
        cur.skip_ws();
        int op_col = cur.column();
        w.op = cur.word();
        const auto& reg = OperatorRegistry::builtin();
        if (!reg.contains(w.op)) throw ParseError("unknown operator '" + w.op + "'", line_no, op_col);
        if (!reg.requestable(w.op)) {
          throw ParseError("operator '" + w.op + "' cannot be used in a partial update", line_no, op_col);
        }
      } else {
        cur.skip_ws();
        if (cur.line.substr(cur.pos, 2) != ":=") cur.fail("expected ':='");
        cur.pos += 2;
      }
      cur.skip_ws();
      if (cur.pos >= cur.line.size()) cur.fail("expected an expression");
      ExprParser ep(cur.line.substr(cur.pos), line_no, cur.column(), step->choose_sites);
      w.value = ep.parse_full();
      for (const auto& [ref, col] : ep.referenced()) {
        if (std::find(step->reads.begin(), step->reads.end(), ref) == step->reads.end()) {
          throw ParseError("read(" + ref.str() + ") is not listed in the step's reads", line_no, col);
        }
      }
      machine->touched.push_back({w.target, line_no, target_col});
      step->writes.push_back(std::move(w));
    } else {
      throw ParseError("unknown directive '" + kw + "'", line_no, kw_col);
    }
  }

  // Declared and touched locations must exist in the initial store.
  for (const auto& d : drafts) {
    for (const auto& dp : d.declared) {
      if (!store.resolves(dp.path)) {
        throw UndeclaredLocation(dp.path.str(), "not present in the initial store", dp.line, dp.column);
      }
    }
    for (const auto& tp : d.touched) {
      if (!store.resolves(tp.path)) {
        throw UndeclaredLocation(tp.path.str(), "not present in the initial store", tp.line, tp.column);
      }
    }
  }

  // Per-class access rules.
  for (const auto& d : drafts) {
    const auto& cls = d.program.classes;
    for (const auto& s : d.program.steps) {
      for (const auto& r : s.reads) {
        if (cls.is_output(r) && !cls.is_shared(r) && !cls.is_monitored(r)) {
          throw ParseError("machine " + d.program.machine_id + " reads output location " + r.str(), s.line, 1);
        }
      }
      for (const auto& w : s.writes) {
        if (cls.is_monitored(w.target) && !cls.is_shared(w.target) && !cls.is_output(w.target)) {
          throw ParseError("machine " + d.program.machine_id + " writes monitored location " + w.target.str(),
                           w.line, 1);
        }
      }
    }
  }

  // A location outside a machine's declared classes is controlled by that
  // machine alone; no other machine may touch or declare anything overlapping.
  for (const auto& d : drafts) {
    const auto& cls = d.program.classes;
    for (const auto& tp : d.touched) {
      if (cls.covers(tp.path)) continue;
      for (const auto& other : drafts) {
        if (&other == &d) continue;
        auto clash = [&](const std::vector<PendingPath>& paths) {
          return std::any_of(paths.begin(), paths.end(),
                             [&](const PendingPath& o) { return overlaps(o.path, tp.path); });
        };
        if (clash(other.touched) || clash(other.declared)) {
          throw UndeclaredLocation(tp.path.str(),
                                   "used by " + d.program.machine_id + " and " + other.program.machine_id +
                                       " but not declared shared/monitored/output by " + d.program.machine_id,
                                   tp.line, tp.column);
        }
      }
    }
  }

  for (auto& d : drafts) {
    store.set_classification(d.program.machine_id, d.program.classes);
    wl.programs.push_back(std::move(d.program));
  }
  wl.initial = std::move(store);
  return wl;
}

Workload load_workload(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read workload file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_workload(ss.str());
}

// ---------------------------------------------------------------------------
// Evaluation

StepFootprint footprint(const Step& step) {
  StepFootprint fp;
  fp.r_loc.insert(step.reads.begin(), step.reads.end());
  for (const auto& w : step.writes) {
    fp.w_loc.insert(w.target);
    if (w.partial) fp.partial_ops[w.target].insert(w.op);
    else fp.genuine_write_loc.insert(w.target);
  }
  return fp;
}

std::size_t choice_index(std::uint64_t seed, const std::string& machine, std::size_t pc, std::size_t site,
                         std::size_t n) {
  std::uint64_t h = splitmix64(seed ^ fnv1a(machine));
  h = splitmix64(h + pc);
  h = splitmix64(h + site);
  return static_cast<std::size_t>(h % n);
}

Value eval_expr(const Expr& e, const std::map<LocationPath, Value>& reads, std::uint64_t seed,
                const std::string& machine, std::size_t pc) {
  auto rec = [&](const ExprPtr& sub) { return eval_expr(*sub, reads, seed, machine, pc); };
  return std::visit(
      [&](const auto& n) -> Value {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, expr::Literal>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, expr::Read>) {
          auto it = reads.find(n.path);
          if (it == reads.end()) throw UnresolvedLocation(n.path.str());
          return it->second;
        } else if constexpr (std::is_same_v<T, expr::Negate>) {
          return Value(wrap(0ULL - static_cast<std::uint64_t>(rec(n.operand).as_int())));
        } else if constexpr (std::is_same_v<T, expr::Binary>) {
          Value a = rec(n.lhs);
          Value b = rec(n.rhs);
          using B = expr::BinOp;
          switch (n.op) {
            case B::Add:
              if (a.is_string() && b.is_string()) return Value(a.as_string() + b.as_string());
              return Value(wrap(static_cast<std::uint64_t>(a.as_int()) + static_cast<std::uint64_t>(b.as_int())));
            case B::Sub:
              return Value(wrap(static_cast<std::uint64_t>(a.as_int()) - static_cast<std::uint64_t>(b.as_int())));
            case B::Mul:
              return Value(wrap(static_cast<std::uint64_t>(a.as_int()) * static_cast<std::uint64_t>(b.as_int())));
            case B::Eq: return Value(a == b);
            case B::Ne: return Value(a != b);
            default: break;
          }
          if (a.data.index() != b.data.index() || !(a.is_int() || a.is_string())) {
            throw TypeError(std::string("cannot order ") + a.kind_name() + " and " + b.kind_name());
          }
          auto c = compare(a, b);
          switch (n.op) {
            case B::Lt: return Value(c < 0);
            case B::Le: return Value(c <= 0);
            case B::Gt: return Value(c > 0);
            default: return Value(c >= 0);
          }
        } else if constexpr (std::is_same_v<T, expr::Choose>) {
          return rec(n.options[choice_index(seed, machine, pc, n.site, n.options.size())]);
        } else {
          return rec(n.cond).as_bool() ? rec(n.then_branch) : rec(n.else_branch);
        }
      },
      e.node);
}

StepIntent eval_step(const Program& p, std::size_t pc, const Store& s, std::uint64_t choice_seed) {
  if (pc >= p.steps.size()) throw Error("step index out of range for machine " + p.machine_id);
  const Step& step = p.steps[pc];
  StepFootprint fp = footprint(step);

  StepIntent intent;
  intent.r_loc = std::move(fp.r_loc);
  intent.w_loc = std::move(fp.w_loc);
  intent.genuine_write_loc = std::move(fp.genuine_write_loc);
  for (const auto& r : step.reads) intent.read_values.emplace(r, s.eval(r));
  for (const auto& w : step.writes) {
    Value v = eval_expr(*w.value, intent.read_values, choice_seed, p.machine_id, pc);
    if (w.partial) intent.partial.push_back(PartialUpdate{w.target, w.op, std::move(v)});
    else intent.genuine.push_back(GenuineUpdate{w.target, std::move(v)});
  }
  return intent;
}

bool terminated(const Program& p, std::size_t pc) noexcept { return pc == p.steps.size(); }

}  // namespace mltx
