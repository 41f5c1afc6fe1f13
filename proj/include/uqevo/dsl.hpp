#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "uqevo/feature_store.hpp"

namespace uqevo::dsl {

// Candidate scoring functions are closed expressions over per-sample arrays
// (lp, ent, pos, ch("name")) and the scalar n, reduced to a single scalar.
// Evaluation is total: no type-checked program can fail on a valid sample
// except by referencing a channel the sample does not carry.

enum class BinOp { add, sub, mul, div, pow, lt, le, gt, ge, eq };

enum class Func {
  sum, mean, min, max, std_dev, first, last,   // reductions: array -> scalar
  abs, exp, log, sqrt, tanh,                   // elementwise unary
  clip,                                        // clip(x, lo, hi)
  corr, dot,                                   // array x array -> scalar
  weights_exp,                                 // weights_exp(gamma) -> array
  if_,                                         // if(cond, a, b), cond != 0
};

const char* func_name(Func f);

struct Expr {
  enum class Kind { number, variable, channel, neg, binary, call, let };

  Kind kind = Kind::number;
  double number = 0.0;  // finite and >= 0; negatives are neg(number)
  std::string name;     // variable name, channel name, or let binder
  BinOp op = BinOp::add;
  Func func = Func::sum;
  // neg: [operand]; binary: [lhs, rhs]; call: args; let: [bound, body]
  std::vector<Expr> children;

  bool operator==(const Expr&) const = default;
};

enum class ValType { scalar, array };

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset_1based, const std::string& message)
      : std::runtime_error(message), offset(offset_1based) {}
  std::size_t offset;  // 1-based byte offset into the source
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Program {
  std::string source;  // text the program was parsed from
  Expr ast;            // type-checked, scalar root

  bool operator==(const Program&) const = default;
};

// Full pipeline: tokenize, parse, resolve identifiers, type-check, require a
// scalar root. Throws ParseError with a 1-based byte offset.
Program parse(std::string_view source);

// Type of a (sub)expression; free variables beyond lp/ent/pos/n are rejected.
// Throws ParseError (offset 0) on unknown identifiers in hand-built trees.
ValType type_of(const Expr& e);

// Deterministic minimal-parenthesis form: single spaces around binary
// operators, no spaces inside call parentheses. parse(canonical_print(p))
// yields an identical AST.
std::string canonical_print(const Expr& ast);
std::string canonical_print(const Program& p);

// Parses and reprints; convenience for deduplication.
std::string canonicalize(std::string_view source);

// Total evaluation. Throws EvalError only for a channel reference absent
// from the sample; every other input has defined semantics (div by zero -> 0,
// log of non-positive -> log(eps), zero-variance corr -> 0, non-finite -> 0).
double evaluate(const Program& p, const SequenceSample& s);
double evaluate(const Expr& ast, const SequenceSample& s);

// Channel names referenced anywhere in the expression, sorted, deduplicated.
std::vector<std::string> channel_references(const Expr& e);

// Distinct input features the expression reads (lp, ent, pos, n, channels;
// let-bound names excluded), sorted. Backs the advisory max-feature lint:
// prompt constraints like "Use up to 3 features." are soft, so the grammar
// never enforces a cap.
std::vector<std::string> feature_references(const Expr& e);

// Empty when the program reads at most max_features distinct inputs,
// otherwise a one-line diagnostic.
std::string lint_max_features(const Program& p, int max_features);

struct ComplexityReport {
  int line_count = 0;
  int ast_nodes = 0;
  int unary_ops = 0;   // unary minus applications
  int binary_ops = 0;  // infix binary operator applications
  // N * log2(eta): N = total operator+operand occurrences, eta = distinct
  // operators+operands; 0 when eta <= 1. Operands are identifiers, constants
  // and channel names; operators are functions, unary/binary ops and let.
  double halstead_volume = 0.0;

  bool operator==(const ComplexityReport&) const = default;
};

ComplexityReport complexity(const Program& p);

// Random generation of well-typed expressions, used by the mock mutation
// client and by property tests.
struct GenOptions {
  std::vector<std::string> channels;  // channel names generation may use
  bool allow_let = true;
};

Expr random_expr(std::mt19937_64& rng, ValType want, int depth,
                 const GenOptions& opts = {});
Program random_program(std::mt19937_64& rng, int depth,
                       const GenOptions& opts = {});

// One random local edit (perturb a constant, swap a reduction or operator,
// wrap a subexpression, splice or mix in a random subtree). The result
// type-checks; after a bounded number of failed attempts the input is
// returned unchanged. Deterministic per RNG state.
Program mutate_random(const Program& p, std::mt19937_64& rng,
                      const GenOptions& opts = {});

}  // namespace uqevo::dsl
