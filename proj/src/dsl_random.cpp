#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "uqevo/dsl.hpp"

namespace uqevo::dsl {

namespace {

Expr number(double v) {
  Expr e;
  e.kind = Expr::Kind::number;
  e.number = v;
  return e;
}

Expr variable(std::string name) {
  Expr e;
  e.kind = Expr::Kind::variable;
  e.name = std::move(name);
  return e;
}

Expr channel(std::string name) {
  Expr e;
  e.kind = Expr::Kind::channel;
  e.name = std::move(name);
  return e;
}

Expr neg(Expr operand) {
  Expr e;
  e.kind = Expr::Kind::neg;
  e.children.push_back(std::move(operand));
  return e;
}

Expr binary(BinOp op, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = Expr::Kind::binary;
  e.op = op;
  e.children.push_back(std::move(lhs));
  e.children.push_back(std::move(rhs));
  return e;
}

Expr call(Func f, std::vector<Expr> args) {
  Expr e;
  e.kind = Expr::Kind::call;
  e.func = f;
  e.children = std::move(args);
  return e;
}

int pick(std::mt19937_64& rng, int n) {
  return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
}

constexpr Func kReductions[] = {Func::sum, Func::mean, Func::min, Func::max,
                                Func::std_dev, Func::first, Func::last};
constexpr Func kUnaryFuncs[] = {Func::abs, Func::exp, Func::log, Func::sqrt,
                                Func::tanh};
constexpr BinOp kArithOps[] = {BinOp::add, BinOp::sub, BinOp::mul, BinOp::div};
constexpr double kGammas[] = {0.3, 0.5, 0.7, 0.8, 0.9, 0.95};

double nice_constant(std::mt19937_64& rng) {
  // Tenths in [0.1, 4.0]; non-negative by construction.
  return static_cast<double>(1 + pick(rng, 40)) / 10.0;
}

Expr array_leaf(std::mt19937_64& rng, const GenOptions& opts) {
  int n_vars = 3 + static_cast<int>(opts.channels.size());
  int choice = pick(rng, n_vars);
  switch (choice) {
    case 0: return variable("lp");
    case 1: return variable("ent");
    case 2: return variable("pos");
    default: return channel(opts.channels[static_cast<std::size_t>(choice - 3)]);
  }
}

Expr scalar_leaf(std::mt19937_64& rng) {
  return pick(rng, 3) == 0 ? variable("n") : number(nice_constant(rng));
}

Expr gen(std::mt19937_64& rng, ValType want, int depth, const GenOptions& opts);

Expr gen_scalar(std::mt19937_64& rng, int depth, const GenOptions& opts) {
  if (depth <= 0) return scalar_leaf(rng);
  switch (pick(rng, 12)) {
    case 0: case 1: case 2: case 3:  // reduction over an array
      return call(kReductions[pick(rng, 7)],
                  {gen(rng, ValType::array, depth - 1, opts)});
    case 4:
      return call(Func::corr, {gen(rng, ValType::array, depth - 1, opts),
                               gen(rng, ValType::array, depth - 1, opts)});
    case 5:
      return call(Func::dot, {gen(rng, ValType::array, depth - 1, opts),
                              gen(rng, ValType::array, depth - 1, opts)});
    case 6:
      return call(kUnaryFuncs[pick(rng, 5)], {gen_scalar(rng, depth - 1, opts)});
    case 7:
      return neg(gen_scalar(rng, depth - 1, opts));
    case 8: case 9:
      return binary(kArithOps[pick(rng, 4)], gen_scalar(rng, depth - 1, opts),
                    gen_scalar(rng, depth - 1, opts));
    case 10: {
      if (!opts.allow_let) return scalar_leaf(rng);
      Expr e;
      e.kind = Expr::Kind::let;
      e.name = "t" + std::to_string(depth);
      e.children.push_back(gen_scalar(rng, depth - 1, opts));
      e.children.push_back(binary(kArithOps[pick(rng, 4)], variable(e.name),
                                  gen_scalar(rng, depth - 1, opts)));
      return e;
    }
    default:
      return scalar_leaf(rng);
  }
}

Expr gen_array(std::mt19937_64& rng, int depth, const GenOptions& opts) {
  if (depth <= 0) return array_leaf(rng, opts);
  switch (pick(rng, 10)) {
    case 0: case 1: case 2:
      return array_leaf(rng, opts);
    case 3:
      return call(kUnaryFuncs[pick(rng, 5)], {gen_array(rng, depth - 1, opts)});
    case 4:
      return neg(gen_array(rng, depth - 1, opts));
    case 5: case 6:
      return binary(kArithOps[pick(rng, 4)], gen_array(rng, depth - 1, opts),
                    gen(rng, pick(rng, 2) == 0 ? ValType::array : ValType::scalar,
                        depth - 1, opts));
    case 7:
      return call(Func::weights_exp, {number(kGammas[pick(rng, 6)])});
    case 8: {
      Expr lo = neg(number(nice_constant(rng)));
      Expr hi = number(nice_constant(rng));
      return call(Func::clip,
                  {gen_array(rng, depth - 1, opts), std::move(lo), std::move(hi)});
    }
    default:
      return binary(BinOp::mul, array_leaf(rng, opts), number(nice_constant(rng)));
  }
}

Expr gen(std::mt19937_64& rng, ValType want, int depth, const GenOptions& opts) {
  return want == ValType::scalar ? gen_scalar(rng, depth, opts)
                                 : gen_array(rng, depth, opts);
}

// ---------------------------------------------------------------------------
// Mutation
// ---------------------------------------------------------------------------

struct TypedNode {
  Expr* node;
  ValType type;
};

void collect_nodes(Expr& e, std::vector<std::pair<std::string, ValType>>& scopes,
                   std::vector<TypedNode>& out) {
  ValType type = ValType::scalar;
  switch (e.kind) {
    case Expr::Kind::number:
      type = ValType::scalar;
      break;
    case Expr::Kind::variable: {
      type = ValType::scalar;
      bool found = false;
      for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
        if (it->first == e.name) {
          type = it->second;
          found = true;
          break;
        }
      }
      if (!found) type = (e.name == "n") ? ValType::scalar : ValType::array;
      break;
    }
    case Expr::Kind::channel:
      type = ValType::array;
      break;
    case Expr::Kind::neg:
      collect_nodes(e.children[0], scopes, out);
      type = out.back().type;  // child type == neg type
      break;
    default:
      break;
  }

  // Children of composite nodes are walked explicitly so the let scope is
  // threaded correctly; the node's own type comes from type_of-equivalent
  // rules on child types recorded during the walk.
  if (e.kind == Expr::Kind::binary || e.kind == Expr::Kind::call ||
      e.kind == Expr::Kind::let) {
    std::vector<ValType> child_types;
    if (e.kind == Expr::Kind::let) {
      collect_nodes(e.children[0], scopes, out);
      ValType bound = out.back().type;
      scopes.emplace_back(e.name, bound);
      collect_nodes(e.children[1], scopes, out);
      child_types.push_back(bound);
      child_types.push_back(out.back().type);
      scopes.pop_back();
      type = child_types[1];
    } else {
      for (auto& c : e.children) {
        collect_nodes(c, scopes, out);
        child_types.push_back(out.back().type);
      }
      if (e.kind == Expr::Kind::binary) {
        type = (child_types[0] == ValType::array || child_types[1] == ValType::array)
                   ? ValType::array
                   : ValType::scalar;
      } else {
        switch (e.func) {
          case Func::sum: case Func::mean: case Func::min: case Func::max:
          case Func::std_dev: case Func::first: case Func::last:
          case Func::corr: case Func::dot:
            type = ValType::scalar;
            break;
          case Func::weights_exp:
            type = ValType::array;
            break;
          case Func::abs: case Func::exp: case Func::log: case Func::sqrt:
          case Func::tanh:
            type = child_types[0];
            break;
          case Func::clip: case Func::if_:
            type = ValType::scalar;
            for (ValType t : child_types)
              if (t == ValType::array) type = ValType::array;
            break;
        }
      }
    }
  }

  out.push_back({&e, type});
}

std::vector<TypedNode> typed_nodes(Expr& root) {
  std::vector<TypedNode> out;
  std::vector<std::pair<std::string, ValType>> scopes;
  collect_nodes(root, scopes, out);
  return out;
}

bool perturb_constant(Expr& root, std::mt19937_64& rng) {
  std::vector<Expr*> numbers;
  for (auto& tn : typed_nodes(root))
    if (tn.node->kind == Expr::Kind::number) numbers.push_back(tn.node);
  if (numbers.empty()) return false;
  Expr* target = numbers[static_cast<std::size_t>(pick(rng, static_cast<int>(numbers.size())))];
  std::normal_distribution<double> jitter(0.0, 0.35);
  double v = target->number;
  v = std::abs(v * std::exp(jitter(rng)) + 0.05 * jitter(rng));
  if (!std::isfinite(v)) v = nice_constant(rng);
  target->number = v;
  return true;
}

bool swap_reduction(Expr& root, std::mt19937_64& rng) {
  std::vector<Expr*> calls;
  for (auto& tn : typed_nodes(root)) {
    if (tn.node->kind != Expr::Kind::call) continue;
    for (Func f : kReductions)
      if (tn.node->func == f) {
        calls.push_back(tn.node);
        break;
      }
  }
  if (calls.empty()) return false;
  Expr* target = calls[static_cast<std::size_t>(pick(rng, static_cast<int>(calls.size())))];
  int current = 0;
  for (int i = 0; i < 7; ++i)
    if (kReductions[i] == target->func) current = i;
  target->func = kReductions[(current + 1 + pick(rng, 6)) % 7];
  return true;
}

bool swap_operator(Expr& root, std::mt19937_64& rng) {
  std::vector<Expr*> bins;
  for (auto& tn : typed_nodes(root)) {
    if (tn.node->kind != Expr::Kind::binary) continue;
    for (BinOp op : kArithOps)
      if (tn.node->op == op) {
        bins.push_back(tn.node);
        break;
      }
  }
  if (bins.empty()) return false;
  Expr* target = bins[static_cast<std::size_t>(pick(rng, static_cast<int>(bins.size())))];
  int current = 0;
  for (int i = 0; i < 4; ++i)
    if (kArithOps[i] == target->op) current = i;
  target->op = kArithOps[(current + 1 + pick(rng, 3)) % 4];
  return true;
}

bool wrap_unary(Expr& root, std::mt19937_64& rng) {
  auto nodes = typed_nodes(root);
  TypedNode target = nodes[static_cast<std::size_t>(pick(rng, static_cast<int>(nodes.size())))];
  Expr original = *target.node;  // deep copy
  if (pick(rng, 4) == 0) {
    *target.node = neg(std::move(original));
  } else {
    *target.node = call(kUnaryFuncs[pick(rng, 5)], {std::move(original)});
  }
  return true;
}

bool splice_subtree(Expr& root, std::mt19937_64& rng, const GenOptions& opts) {
  auto nodes = typed_nodes(root);
  TypedNode target = nodes[static_cast<std::size_t>(pick(rng, static_cast<int>(nodes.size())))];
  *target.node = gen(rng, target.type, 1 + pick(rng, 2), opts);
  return true;
}

bool combine_subtree(Expr& root, std::mt19937_64& rng, const GenOptions& opts) {
  auto nodes = typed_nodes(root);
  TypedNode target = nodes[static_cast<std::size_t>(pick(rng, static_cast<int>(nodes.size())))];
  Expr original = *target.node;
  BinOp op = kArithOps[pick(rng, 3)];  // add, sub, mul
  // Mixing in `weight * term` keeps the magnitude of the edit tunable by
  // later constant perturbations.
  ValType term_type = pick(rng, 2) == 0 ? target.type : ValType::scalar;
  Expr term = binary(BinOp::mul, number(nice_constant(rng)),
                     gen(rng, term_type, 1 + pick(rng, 2), opts));
  *target.node = binary(op, std::move(original), std::move(term));
  return true;
}

}  // namespace

Expr random_expr(std::mt19937_64& rng, ValType want, int depth, const GenOptions& opts) {
  return gen(rng, want, depth, opts);
}

Program random_program(std::mt19937_64& rng, int depth, const GenOptions& opts) {
  Expr ast = gen_scalar(rng, depth, opts);
  Program p;
  p.ast = std::move(ast);
  p.source = canonical_print(p.ast);
  return p;
}

Program mutate_random(const Program& p, std::mt19937_64& rng, const GenOptions& opts) {
  constexpr int kMaxAttempts = 24;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Expr candidate = p.ast;  // value copy
    bool applied = false;
    switch (pick(rng, 6)) {
      case 0: applied = perturb_constant(candidate, rng); break;
      case 1: applied = swap_reduction(candidate, rng); break;
      case 2: applied = swap_operator(candidate, rng); break;
      case 3: applied = wrap_unary(candidate, rng); break;
      case 4: applied = splice_subtree(candidate, rng, opts); break;
      case 5: applied = combine_subtree(candidate, rng, opts); break;
    }
    if (!applied) continue;
    try {
      if (type_of(candidate) != ValType::scalar) continue;
    } catch (const ParseError&) {
      continue;
    }
    Program out;
    out.ast = std::move(candidate);
    out.source = canonical_print(out.ast);
    if (out.source == p.source) continue;  // no-op edit, try again
    return out;
  }
  return p;
}

}  // namespace uqevo::dsl
