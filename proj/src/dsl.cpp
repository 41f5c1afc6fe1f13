#include "uqevo/dsl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "uqevo/estimators.hpp"

namespace uqevo::dsl {

namespace {

// ---------------------------------------------------------------------------
// Function table
// ---------------------------------------------------------------------------

struct FuncInfo {
  Func func;
  const char* name;
  int arity;
};

constexpr FuncInfo kFuncs[] = {
    {Func::sum, "sum", 1},     {Func::mean, "mean", 1},
    {Func::min, "min", 1},     {Func::max, "max", 1},
    {Func::std_dev, "std", 1}, {Func::first, "first", 1},
    {Func::last, "last", 1},   {Func::abs, "abs", 1},
    {Func::exp, "exp", 1},     {Func::log, "log", 1},
    {Func::sqrt, "sqrt", 1},   {Func::tanh, "tanh", 1},
    {Func::clip, "clip", 3},   {Func::corr, "corr", 2},
    {Func::dot, "dot", 2},     {Func::weights_exp, "weights_exp", 1},
    {Func::if_, "if", 3},
};

const FuncInfo* find_func(std::string_view name) {
  for (const auto& f : kFuncs)
    if (name == f.name) return &f;
  return nullptr;
}

const FuncInfo& func_info(Func f) {
  for (const auto& info : kFuncs)
    if (info.func == f) return info;
  throw std::logic_error("bad func");
}

bool is_reduction(Func f) {
  switch (f) {
    case Func::sum: case Func::mean: case Func::min: case Func::max:
    case Func::std_dev: case Func::first: case Func::last:
      return true;
    default:
      return false;
  }
}

bool is_elementwise_unary(Func f) {
  switch (f) {
    case Func::abs: case Func::exp: case Func::log: case Func::sqrt:
    case Func::tanh:
      return true;
    default:
      return false;
  }
}

bool is_comparison(BinOp op) {
  switch (op) {
    case BinOp::lt: case BinOp::le: case BinOp::gt: case BinOp::ge: case BinOp::eq:
      return true;
    default:
      return false;
  }
}

const char* binop_name(BinOp op) {
  switch (op) {
    case BinOp::add: return "+";
    case BinOp::sub: return "-";
    case BinOp::mul: return "*";
    case BinOp::div: return "/";
    case BinOp::pow: return "^";
    case BinOp::lt: return "<";
    case BinOp::le: return "<=";
    case BinOp::gt: return ">";
    case BinOp::ge: return ">=";
    case BinOp::eq: return "=";
  }
  return "?";
}

bool is_builtin_var(std::string_view name) {
  return name == "lp" || name == "ent" || name == "pos" || name == "n";
}

ValType builtin_var_type(std::string_view name) {
  return name == "n" ? ValType::scalar : ValType::array;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

enum class Tok { number, ident, string, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;    // punct symbol, identifier, string body
  double number = 0.0;
  std::size_t offset = 0;  // 0-based byte offset of the first character
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_ws();
      Token t = next();
      bool done = t.kind == Tok::end;
      out.push_back(std::move(t));
      if (done) break;
    }
    return out;
  }

 private:
  [[noreturn]] void fail(std::size_t offset, const std::string& msg) {
    throw ParseError(offset + 1, "syntax error at offset " +
                                     std::to_string(offset + 1) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
  }

  Token next() {
    if (pos_ >= src_.size()) return {Tok::end, "", 0.0, src_.size()};
    std::size_t start = pos_;
    char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) return lex_number(start);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return lex_ident(start);
    if (c == '"') return lex_string(start);
    // Two-char operators first.
    if (pos_ + 1 < src_.size()) {
      std::string_view two = src_.substr(pos_, 2);
      if (two == "<=" || two == ">=") {
        pos_ += 2;
        return {Tok::punct, std::string(two), 0.0, start};
      }
    }
    static const std::string singles = "+-*/^<>=(),";
    if (singles.find(c) != std::string::npos) {
      ++pos_;
      return {Tok::punct, std::string(1, c), 0.0, start};
    }
    fail(start, std::string("unexpected character '") + c + "'");
  }

  Token lex_number(std::size_t start) {
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
        fail(pos_ < src_.size() ? pos_ : src_.size(), "expected digit after '.'");
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        pos_ = mark;  // 'e' belongs to something else; unlikely but harmless
      } else {
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || !std::isfinite(value))
      fail(start, "bad number literal");
    return {Tok::number, std::string(src_.substr(start, pos_ - start)), value, start};
  }

  Token lex_ident(std::size_t start) {
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    return {Tok::ident, std::string(src_.substr(start, pos_ - start)), 0.0, start};
  }

  Token lex_string(std::size_t start) {
    ++pos_;  // opening quote
    std::size_t body = pos_;
    while (pos_ < src_.size() && src_[pos_] != '"') ++pos_;
    if (pos_ >= src_.size()) fail(start, "unterminated string");
    Token t{Tok::string, std::string(src_.substr(body, pos_ - body)), 0.0, start};
    ++pos_;  // closing quote
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Parser with inline name resolution and type checking
// ---------------------------------------------------------------------------

struct Typed {
  Expr expr;
  ValType type;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : tokens_(Lexer(src).run()) {}

  Expr run() {
    Typed t = parse_expr();
    expect_end();
    if (t.type != ValType::scalar)
      throw ParseError(1, "program must evaluate to a scalar, not an array");
    return std::move(t.expr);
  }

 private:
  const Token& peek() const { return tokens_[index_]; }
  Token take() { return tokens_[index_++]; }

  bool at_punct(const char* p) const {
    return peek().kind == Tok::punct && peek().text == p;
  }
  bool at_keyword(const char* k) const {
    return peek().kind == Tok::ident && peek().text == k;
  }

  [[noreturn]] void fail(const Token& at, const std::string& msg) {
    throw ParseError(at.offset + 1, "syntax error at offset " +
                                        std::to_string(at.offset + 1) + ": " + msg);
  }

  void expect_punct(const char* p) {
    if (!at_punct(p)) fail(peek(), std::string("expected '") + p + "'");
    take();
  }

  void expect_end() {
    if (peek().kind != Tok::end) fail(peek(), "expected end of input");
  }

  Typed parse_expr() {
    if (at_keyword("let")) return parse_let();
    return parse_comparison();
  }

  Typed parse_let() {
    take();  // let
    if (peek().kind != Tok::ident) fail(peek(), "expected binding name after 'let'");
    Token name = take();
    if (is_builtin_var(name.text) || find_func(name.text) || name.text == "let" ||
        name.text == "in" || name.text == "ch")
      fail(name, "'" + name.text + "' cannot be rebound");
    expect_punct("=");
    Typed bound = parse_expr();
    if (!at_keyword("in")) fail(peek(), "expected 'in'");
    take();
    scopes_.emplace_back(name.text, bound.type);
    Typed body = parse_expr();
    scopes_.pop_back();

    Expr e;
    e.kind = Expr::Kind::let;
    e.name = name.text;
    e.children.push_back(std::move(bound.expr));
    e.children.push_back(std::move(body.expr));
    return {std::move(e), body.type};
  }

  Typed parse_comparison() {
    Typed lhs = parse_additive();
    while (at_punct("<") || at_punct("<=") || at_punct(">") || at_punct(">=") ||
           at_punct("=")) {
      Token op = take();
      Typed rhs = parse_additive();
      lhs = make_binary(op.text, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  Typed parse_additive() {
    Typed lhs = parse_multiplicative();
    while (at_punct("+") || at_punct("-")) {
      Token op = take();
      Typed rhs = parse_multiplicative();
      lhs = make_binary(op.text, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  Typed parse_multiplicative() {
    Typed lhs = parse_power();
    while (at_punct("*") || at_punct("/")) {
      Token op = take();
      Typed rhs = parse_power();
      lhs = make_binary(op.text, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  // Right-associative; unary minus binds tighter than '^'.
  Typed parse_power() {
    Typed lhs = parse_unary();
    if (at_punct("^")) {
      take();
      Typed rhs = parse_power();
      lhs = make_binary("^", std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  Typed parse_unary() {
    if (at_punct("-")) {
      take();
      Typed operand = parse_unary();
      Expr e;
      e.kind = Expr::Kind::neg;
      e.children.push_back(std::move(operand.expr));
      return {std::move(e), operand.type};
    }
    return parse_primary();
  }

  Typed parse_primary() {
    const Token& t = peek();
    if (t.kind == Tok::number) {
      Token num = take();
      Expr e;
      e.kind = Expr::Kind::number;
      e.number = num.number;
      return {std::move(e), ValType::scalar};
    }
    if (at_punct("(")) {
      take();
      Typed inner = parse_expr();
      expect_punct(")");
      return inner;
    }
    if (t.kind == Tok::ident) {
      if (at_keyword("let")) return parse_let();
      Token name = take();
      if (name.text == "ch") return parse_channel(name);
      if (at_punct("(")) return parse_call(name);
      return resolve_variable(name);
    }
    fail(t, "expected expression");
  }

  Typed parse_channel(const Token& name) {
    if (!at_punct("(")) fail(peek(), "expected '(' after 'ch'");
    take();
    if (peek().kind != Tok::string) fail(peek(), "expected channel name string");
    Token ch = take();
    expect_punct(")");
    Expr e;
    e.kind = Expr::Kind::channel;
    e.name = ch.text;
    (void)name;
    return {std::move(e), ValType::array};
  }

  Typed parse_call(const Token& name) {
    const FuncInfo* info = find_func(name.text);
    if (!info) fail(name, "unknown function '" + name.text + "'");
    take();  // (
    std::vector<Typed> args;
    if (!at_punct(")")) {
      args.push_back(parse_expr());
      while (at_punct(",")) {
        take();
        args.push_back(parse_expr());
      }
    }
    Token closing = peek();
    expect_punct(")");
    if (static_cast<int>(args.size()) != info->arity)
      fail(closing, std::string(info->name) + " expects " +
                        std::to_string(info->arity) + " argument(s)");
    return make_call(info->func, std::move(args), name);
  }

  Typed resolve_variable(const Token& name) {
    Expr e;
    e.kind = Expr::Kind::variable;
    e.name = name.text;
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
      if (it->first == name.text) return {std::move(e), it->second};
    if (is_builtin_var(name.text)) return {std::move(e), builtin_var_type(name.text)};
    fail(name, "unknown identifier '" + name.text + "'");
  }

  Typed make_binary(const std::string& op_text, Typed lhs, Typed rhs) {
    static const std::map<std::string, BinOp> ops = {
        {"+", BinOp::add}, {"-", BinOp::sub}, {"*", BinOp::mul},
        {"/", BinOp::div}, {"^", BinOp::pow}, {"<", BinOp::lt},
        {"<=", BinOp::le}, {">", BinOp::gt},  {">=", BinOp::ge},
        {"=", BinOp::eq}};
    Expr e;
    e.kind = Expr::Kind::binary;
    e.op = ops.at(op_text);
    ValType type = (lhs.type == ValType::array || rhs.type == ValType::array)
                       ? ValType::array
                       : ValType::scalar;
    e.children.push_back(std::move(lhs.expr));
    e.children.push_back(std::move(rhs.expr));
    return {std::move(e), type};
  }

  Typed make_call(Func f, std::vector<Typed> args, const Token& at) {
    Expr e;
    e.kind = Expr::Kind::call;
    e.func = f;
    ValType type;
    if (is_reduction(f)) {
      if (args[0].type != ValType::array)
        fail(at, std::string(func_info(f).name) + " expects an array argument");
      type = ValType::scalar;
    } else if (is_elementwise_unary(f)) {
      type = args[0].type;
    } else if (f == Func::clip || f == Func::if_) {
      type = ValType::scalar;
      for (const auto& a : args)
        if (a.type == ValType::array) type = ValType::array;
    } else if (f == Func::corr || f == Func::dot) {
      if (args[0].type != ValType::array || args[1].type != ValType::array)
        fail(at, std::string(func_info(f).name) + " expects array arguments");
      type = ValType::scalar;
    } else {  // weights_exp
      if (args[0].type != ValType::scalar)
        fail(at, "weights_exp expects a scalar argument");
      type = ValType::array;
    }
    for (auto& a : args) e.children.push_back(std::move(a.expr));
    return {std::move(e), type};
  }

  std::vector<Token> tokens_;
  std::size_t index_ = 0;
  std::vector<std::pair<std::string, ValType>> scopes_;
};

}  // namespace

const char* func_name(Func f) { return func_info(f).name; }

Program parse(std::string_view source) {
  Parser parser(source);
  Program p;
  p.source = std::string(source);
  p.ast = parser.run();
  return p;
}

// ---------------------------------------------------------------------------
// Standalone type checker (for generated / mutated trees)
// ---------------------------------------------------------------------------

namespace {

ValType infer_type(const Expr& e, std::vector<std::pair<std::string, ValType>>& scopes) {
  switch (e.kind) {
    case Expr::Kind::number:
      if (!(std::isfinite(e.number) && e.number >= 0.0))
        throw ParseError(0, "number literal must be finite and non-negative");
      return ValType::scalar;
    case Expr::Kind::variable: {
      for (auto it = scopes.rbegin(); it != scopes.rend(); ++it)
        if (it->first == e.name) return it->second;
      if (is_builtin_var(e.name)) return builtin_var_type(e.name);
      throw ParseError(0, "unknown identifier '" + e.name + "'");
    }
    case Expr::Kind::channel:
      return ValType::array;
    case Expr::Kind::neg:
      if (e.children.size() != 1) throw ParseError(0, "neg arity");
      return infer_type(e.children[0], scopes);
    case Expr::Kind::binary: {
      if (e.children.size() != 2) throw ParseError(0, "binary arity");
      ValType a = infer_type(e.children[0], scopes);
      ValType b = infer_type(e.children[1], scopes);
      return (a == ValType::array || b == ValType::array) ? ValType::array
                                                          : ValType::scalar;
    }
    case Expr::Kind::call: {
      const FuncInfo& info = func_info(e.func);
      if (static_cast<int>(e.children.size()) != info.arity)
        throw ParseError(0, std::string(info.name) + " arity mismatch");
      std::vector<ValType> args;
      args.reserve(e.children.size());
      for (const auto& c : e.children) args.push_back(infer_type(c, scopes));
      if (is_reduction(e.func)) {
        if (args[0] != ValType::array)
          throw ParseError(0, std::string(info.name) + " expects an array");
        return ValType::scalar;
      }
      if (is_elementwise_unary(e.func)) return args[0];
      if (e.func == Func::clip || e.func == Func::if_) {
        for (ValType t : args)
          if (t == ValType::array) return ValType::array;
        return ValType::scalar;
      }
      if (e.func == Func::corr || e.func == Func::dot) {
        if (args[0] != ValType::array || args[1] != ValType::array)
          throw ParseError(0, std::string(info.name) + " expects arrays");
        return ValType::scalar;
      }
      if (args[0] != ValType::scalar)
        throw ParseError(0, "weights_exp expects a scalar");
      return ValType::array;
    }
    case Expr::Kind::let: {
      if (e.children.size() != 2) throw ParseError(0, "let arity");
      ValType bound = infer_type(e.children[0], scopes);
      scopes.emplace_back(e.name, bound);
      ValType body = infer_type(e.children[1], scopes);
      scopes.pop_back();
      return body;
    }
  }
  throw ParseError(0, "bad expression node");
}

}  // namespace

ValType type_of(const Expr& e) {
  std::vector<std::pair<std::string, ValType>> scopes;
  return infer_type(e, scopes);
}

// ---------------------------------------------------------------------------
// Canonical printer
// ---------------------------------------------------------------------------

namespace {

// Precedence levels: let 0 < comparison 1 < additive 2 < multiplicative 3 <
// power 4 < unary 5 < primary 6.
int precedence_of(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::let: return 0;
    case Expr::Kind::binary:
      if (is_comparison(e.op)) return 1;
      if (e.op == BinOp::add || e.op == BinOp::sub) return 2;
      if (e.op == BinOp::mul || e.op == BinOp::div) return 3;
      return 4;  // pow
    case Expr::Kind::neg: return 5;
    default: return 6;
  }
}

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void print_expr(const Expr& e, int min_prec, std::string& out) {
  int prec = precedence_of(e);
  bool parens = prec < min_prec;
  if (parens) out += '(';
  switch (e.kind) {
    case Expr::Kind::number:
      out += format_number(e.number);
      break;
    case Expr::Kind::variable:
      out += e.name;
      break;
    case Expr::Kind::channel:
      out += "ch(\"";
      out += e.name;
      out += "\")";
      break;
    case Expr::Kind::neg:
      out += '-';
      print_expr(e.children[0], 5, out);
      break;
    case Expr::Kind::binary: {
      // Left-associative levels print (lhs, level)(rhs, level+1); power is
      // right-associative with a unary-tight left side.
      int lhs_min = prec == 4 ? 5 : prec;
      int rhs_min = prec == 4 ? 4 : prec + 1;
      print_expr(e.children[0], lhs_min, out);
      out += ' ';
      out += binop_name(e.op);
      out += ' ';
      print_expr(e.children[1], rhs_min, out);
      break;
    }
    case Expr::Kind::call: {
      out += func_info(e.func).name;
      out += '(';
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += ',';
        print_expr(e.children[i], 0, out);
      }
      out += ')';
      break;
    }
    case Expr::Kind::let:
      out += "let ";
      out += e.name;
      out += " = ";
      print_expr(e.children[0], 0, out);
      out += " in ";
      print_expr(e.children[1], 0, out);
      break;
  }
  if (parens) out += ')';
}

}  // namespace

std::string canonical_print(const Expr& ast) {
  std::string out;
  print_expr(ast, 0, out);
  return out;
}

std::string canonical_print(const Program& p) { return canonical_print(p.ast); }

std::string canonicalize(std::string_view source) {
  return canonical_print(parse(source).ast);
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

namespace {

struct Value {
  double num = 0.0;
  std::vector<double> vec;
  bool is_vec = false;

  static Value scalar(double v) { return {v, {}, false}; }
  static Value array(std::vector<double> v) { return {0.0, std::move(v), true}; }
};

double sanitize(double x) { return std::isfinite(x) ? x : 0.0; }

struct EvalContext {
  const SequenceSample* sample;
  std::vector<double> positions;
  std::vector<std::pair<std::string, Value>> lets;
};

template <typename F>
Value zip_apply(const Value& a, const Value& b, F&& f) {
  if (!a.is_vec && !b.is_vec) return Value::scalar(sanitize(f(a.num, b.num)));
  std::size_t n = a.is_vec ? a.vec.size() : b.vec.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = a.is_vec ? a.vec[i] : a.num;
    double y = b.is_vec ? b.vec[i] : b.num;
    out[i] = sanitize(f(x, y));
  }
  return Value::array(std::move(out));
}

template <typename F>
Value map_apply(const Value& a, F&& f) {
  if (!a.is_vec) return Value::scalar(sanitize(f(a.num)));
  std::vector<double> out(a.vec.size());
  for (std::size_t i = 0; i < a.vec.size(); ++i) out[i] = sanitize(f(a.vec[i]));
  return Value::array(std::move(out));
}

double total_log(double x) {
  // log of a non-positive value clamps to log(machine epsilon).
  if (x <= 0.0) return std::log(std::numeric_limits<double>::epsilon());
  return std::log(x);
}

double total_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

double reduce(Func f, const std::vector<double>& xs) {
  switch (f) {
    case Func::sum: {
      double s = 0.0;
      for (double x : xs) s += x;
      return s;
    }
    case Func::mean: {
      double s = 0.0;
      for (double x : xs) s += x;
      return s / static_cast<double>(xs.size());
    }
    case Func::min: return *std::min_element(xs.begin(), xs.end());
    case Func::max: return *std::max_element(xs.begin(), xs.end());
    case Func::std_dev: {
      if (xs.size() < 2) return 0.0;
      double s = 0.0;
      for (double x : xs) s += x;
      double m = s / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - m) * (x - m);
      return std::sqrt(ss / static_cast<double>(xs.size()));
    }
    case Func::first: return xs.front();
    case Func::last: return xs.back();
    default: throw std::logic_error("not a reduction");
  }
}

double total_corr(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

Value eval_expr(const Expr& e, EvalContext& ctx) {
  switch (e.kind) {
    case Expr::Kind::number:
      return Value::scalar(e.number);
    case Expr::Kind::variable: {
      for (auto it = ctx.lets.rbegin(); it != ctx.lets.rend(); ++it)
        if (it->first == e.name) return it->second;
      if (e.name == "lp") return Value::array(ctx.sample->logprobs);
      if (e.name == "ent") return Value::array(ctx.sample->entropies);
      if (e.name == "pos") return Value::array(ctx.positions);
      if (e.name == "n") return Value::scalar(static_cast<double>(ctx.sample->size()));
      throw EvalError("unknown identifier '" + e.name + "'");
    }
    case Expr::Kind::channel: {
      auto it = ctx.sample->channels.find(e.name);
      if (it == ctx.sample->channels.end() || it->second.size() != ctx.sample->size())
        throw EvalError("unknown channel '" + e.name + "'");
      return Value::array(it->second);
    }
    case Expr::Kind::neg:
      return map_apply(eval_expr(e.children[0], ctx), [](double x) { return -x; });
    case Expr::Kind::binary: {
      Value a = eval_expr(e.children[0], ctx);
      Value b = eval_expr(e.children[1], ctx);
      switch (e.op) {
        case BinOp::add: return zip_apply(a, b, [](double x, double y) { return x + y; });
        case BinOp::sub: return zip_apply(a, b, [](double x, double y) { return x - y; });
        case BinOp::mul: return zip_apply(a, b, [](double x, double y) { return x * y; });
        case BinOp::div: return zip_apply(a, b, total_div);
        case BinOp::pow: return zip_apply(a, b, [](double x, double y) { return std::pow(x, y); });
        case BinOp::lt: return zip_apply(a, b, [](double x, double y) { return x < y ? 1.0 : 0.0; });
        case BinOp::le: return zip_apply(a, b, [](double x, double y) { return x <= y ? 1.0 : 0.0; });
        case BinOp::gt: return zip_apply(a, b, [](double x, double y) { return x > y ? 1.0 : 0.0; });
        case BinOp::ge: return zip_apply(a, b, [](double x, double y) { return x >= y ? 1.0 : 0.0; });
        case BinOp::eq: return zip_apply(a, b, [](double x, double y) { return x == y ? 1.0 : 0.0; });
      }
      throw std::logic_error("bad binop");
    }
    case Expr::Kind::call: {
      switch (e.func) {
        case Func::abs: return map_apply(eval_expr(e.children[0], ctx), [](double x) { return std::abs(x); });
        case Func::exp: return map_apply(eval_expr(e.children[0], ctx), [](double x) { return std::exp(x); });
        case Func::log: return map_apply(eval_expr(e.children[0], ctx), total_log);
        case Func::sqrt: return map_apply(eval_expr(e.children[0], ctx), [](double x) { return std::sqrt(x); });
        case Func::tanh: return map_apply(eval_expr(e.children[0], ctx), [](double x) { return std::tanh(x); });
        case Func::clip: {
          Value x = eval_expr(e.children[0], ctx);
          Value lo = eval_expr(e.children[1], ctx);
          Value hi = eval_expr(e.children[2], ctx);
          Value lower = zip_apply(x, lo, [](double a, double b) { return a > b ? a : b; });
          return zip_apply(lower, hi, [](double a, double b) { return a < b ? a : b; });
        }
        case Func::corr: {
          Value a = eval_expr(e.children[0], ctx);
          Value b = eval_expr(e.children[1], ctx);
          return Value::scalar(sanitize(total_corr(a.vec, b.vec)));
        }
        case Func::dot: {
          Value a = eval_expr(e.children[0], ctx);
          Value b = eval_expr(e.children[1], ctx);
          std::size_t n = std::min(a.vec.size(), b.vec.size());
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += a.vec[i] * b.vec[i];
          return Value::scalar(sanitize(s));
        }
        case Func::weights_exp: {
          Value g = eval_expr(e.children[0], ctx);
          double gamma = std::min(std::max(g.num, 1e-12), 1.0);
          return Value::array(exp_weights(ctx.sample->size(), gamma));
        }
        case Func::if_: {
          Value c = eval_expr(e.children[0], ctx);
          Value a = eval_expr(e.children[1], ctx);
          Value b = eval_expr(e.children[2], ctx);
          if (!c.is_vec && !a.is_vec && !b.is_vec)
            return Value::scalar(sanitize(c.num != 0.0 ? a.num : b.num));
          std::size_t n = c.is_vec   ? c.vec.size()
                          : a.is_vec ? a.vec.size()
                                     : b.vec.size();
          std::vector<double> out(n);
          for (std::size_t i = 0; i < n; ++i) {
            double cond = c.is_vec ? c.vec[i] : c.num;
            double x = a.is_vec ? a.vec[i] : a.num;
            double y = b.is_vec ? b.vec[i] : b.num;
            out[i] = sanitize(cond != 0.0 ? x : y);
          }
          return Value::array(std::move(out));
        }
        default: {  // reductions
          Value a = eval_expr(e.children[0], ctx);
          return Value::scalar(sanitize(reduce(e.func, a.vec)));
        }
      }
    }
    case Expr::Kind::let: {
      Value bound = eval_expr(e.children[0], ctx);
      ctx.lets.emplace_back(e.name, std::move(bound));
      Value body = eval_expr(e.children[1], ctx);
      ctx.lets.pop_back();
      return body;
    }
  }
  throw std::logic_error("bad expression node");
}

}  // namespace

double evaluate(const Expr& ast, const SequenceSample& s) {
  EvalContext ctx;
  ctx.sample = &s;
  ctx.positions.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) ctx.positions[i] = static_cast<double>(i);
  Value v = eval_expr(ast, ctx);
  return sanitize(v.num);
}

double evaluate(const Program& p, const SequenceSample& s) {
  return evaluate(p.ast, s);
}

std::vector<std::string> channel_references(const Expr& e) {
  std::set<std::string> names;
  std::vector<const Expr*> stack = {&e};
  while (!stack.empty()) {
    const Expr* cur = stack.back();
    stack.pop_back();
    if (cur->kind == Expr::Kind::channel) names.insert(cur->name);
    for (const auto& c : cur->children) stack.push_back(&c);
  }
  return {names.begin(), names.end()};
}

namespace {

void collect_features(const Expr& e, std::vector<std::string>& bound,
                      std::set<std::string>& out) {
  switch (e.kind) {
    case Expr::Kind::variable:
      if (std::find(bound.begin(), bound.end(), e.name) == bound.end())
        out.insert(e.name);
      return;
    case Expr::Kind::channel:
      out.insert("ch:" + e.name);
      return;
    case Expr::Kind::let:
      collect_features(e.children[0], bound, out);
      bound.push_back(e.name);
      collect_features(e.children[1], bound, out);
      bound.pop_back();
      return;
    default:
      for (const auto& c : e.children) collect_features(c, bound, out);
      return;
  }
}

}  // namespace

std::vector<std::string> feature_references(const Expr& e) {
  std::set<std::string> out;
  std::vector<std::string> bound;
  collect_features(e, bound, out);
  return {out.begin(), out.end()};
}

std::string lint_max_features(const Program& p, int max_features) {
  auto features = feature_references(p.ast);
  if (static_cast<int>(features.size()) <= max_features) return {};
  std::string list;
  for (const auto& f : features) {
    if (!list.empty()) list += ", ";
    list += f;
  }
  return "uses " + std::to_string(features.size()) + " distinct features (" + list +
         "), more than the advised " + std::to_string(max_features);
}

// ---------------------------------------------------------------------------
// Complexity
// ---------------------------------------------------------------------------

namespace {

struct HalsteadCounts {
  int total = 0;
  std::set<std::string> distinct;

  void add(const std::string& key) {
    ++total;
    distinct.insert(key);
  }
};

void count_nodes(const Expr& e, ComplexityReport& r, HalsteadCounts& operators,
                 HalsteadCounts& operands) {
  ++r.ast_nodes;
  switch (e.kind) {
    case Expr::Kind::number:
      operands.add("num:" + format_number(e.number));
      break;
    case Expr::Kind::variable:
      operands.add("var:" + e.name);
      break;
    case Expr::Kind::channel:
      // ch("x") names an input column; the name is the operand.
      operands.add("chan:" + e.name);
      break;
    case Expr::Kind::neg:
      ++r.unary_ops;
      operators.add("neg");
      break;
    case Expr::Kind::binary:
      ++r.binary_ops;
      operators.add(std::string("op:") + binop_name(e.op));
      break;
    case Expr::Kind::call:
      operators.add(std::string("fn:") + func_info(e.func).name);
      break;
    case Expr::Kind::let:
      operators.add("let");
      operands.add("var:" + e.name);  // binding occurrence
      break;
  }
  for (const auto& c : e.children) count_nodes(c, r, operators, operands);
}

}  // namespace

ComplexityReport complexity(const Program& p) {
  ComplexityReport r;

  std::istringstream lines(p.source);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) ++r.line_count;
  }

  HalsteadCounts operators, operands;
  count_nodes(p.ast, r, operators, operands);
  int total = operators.total + operands.total;
  std::size_t distinct = operators.distinct.size() + operands.distinct.size();
  r.halstead_volume =
      distinct <= 1 ? 0.0
                    : static_cast<double>(total) * std::log2(static_cast<double>(distinct));
  return r;
}

}  // namespace uqevo::dsl
