#pragma once

// Step-based transaction programs.
//
// A workload file declares an initial store and a set of machines. Each
// machine runs a fixed list of steps; a step reads declared locations and
// issues genuine writes and partial updates whose targets are literal paths,
// so a step's read and write location sets are known without evaluating it.
//
//   init /acct = { a: 100, b: 50 }
//   machine T1
//     shared /acct
//     step:
//       read /acct/a
//       write /acct/a := read(/acct/a) - 10
//     step:
//       partial /acct/b add choose(5, 10)

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mltx/ops.hpp"
#include "mltx/values.hpp"

namespace mltx {

class UndeclaredLocation : public ParseError {
 public:
  UndeclaredLocation(const std::string& path, const std::string& why, int line, int column)
      : ParseError("undeclared location " + path + ": " + why, line, column) {}
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

namespace expr {
struct Literal { Value value; };
struct Read { LocationPath path; };
struct Negate { ExprPtr operand; };
enum class BinOp : std::uint8_t { Add, Sub, Mul, Eq, Ne, Lt, Le, Gt, Ge };
struct Binary { BinOp op; ExprPtr lhs; ExprPtr rhs; };
struct Choose { std::size_t site; std::vector<ExprPtr> options; };
struct If { ExprPtr cond; ExprPtr then_branch; ExprPtr else_branch; };
}  // namespace expr

struct Expr {
  std::variant<expr::Literal, expr::Read, expr::Negate, expr::Binary, expr::Choose, expr::If> node;
};

struct WriteInstr {
  bool partial = false;
  LocationPath target;
  std::string op;  // partial only
  ExprPtr value;
  int line = 0;
};

struct Step {
  std::vector<LocationPath> reads;
  std::vector<WriteInstr> writes;
  std::size_t choose_sites = 0;
  int line = 0;
};

/// Location sets of a step; independent of the store.
struct StepFootprint {
  std::set<LocationPath> r_loc;
  std::set<LocationPath> w_loc;
  std::set<LocationPath> genuine_write_loc;
  std::map<LocationPath, std::set<std::string>> partial_ops;
};

struct StepIntent {
  std::map<LocationPath, Value> read_values;
  std::vector<GenuineUpdate> genuine;
  std::vector<PartialUpdate> partial;
  std::set<LocationPath> r_loc;
  std::set<LocationPath> w_loc;
  std::set<LocationPath> genuine_write_loc;

  friend bool operator==(const StepIntent&, const StepIntent&) = default;
};

struct Program {
  std::string machine_id;
  Classification classes;
  std::vector<Step> steps;

  std::size_t step_count() const noexcept { return steps.size(); }
};

struct Workload {
  std::string source;
  std::string digest;  // hex SHA-256 of `source`
  std::vector<Program> programs;  // in declaration order
  Store initial;

  const Program& program(const std::string& machine) const;
  bool has_machine(const std::string& machine) const;
  std::size_t total_steps() const;
};

/// Agent names reserved for controller components.
bool is_reserved_agent_name(std::string_view name);

Workload parse_workload(std::string_view text);
/// Reads and parses a file; throws Error naming the path if unreadable.
Workload load_workload(const std::string& path);

std::string sha256_hex(std::string_view data);

StepFootprint footprint(const Step& step);

/// Deterministic in (program, pc, store, seed). Throws UnresolvedLocation or
/// TypeError when the step cannot be evaluated.
StepIntent eval_step(const Program& p, std::size_t pc, const Store& s, std::uint64_t choice_seed);

bool terminated(const Program& p, std::size_t pc) noexcept;

/// The choice function: index in [0, n) for a choose site.
std::size_t choice_index(std::uint64_t seed, const std::string& machine, std::size_t pc,
                         std::size_t site, std::size_t n);

/// Integer + - * wrap modulo 2^64.
Value eval_expr(const Expr& e, const std::map<LocationPath, Value>& reads, std::uint64_t seed,
                const std::string& machine, std::size_t pc);

}  // namespace mltx
