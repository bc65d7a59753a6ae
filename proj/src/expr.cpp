#include "hybridsens/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

namespace hybridsens {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)),
      offset_(offset) {}

UnknownIdentifier::UnknownIdentifier(std::string symbol, std::size_t offset)
    : ParseError("unknown identifier '" + symbol + "'", offset),
      symbol_(std::move(symbol)) {}

NumericDomainError::NumericDomainError(const std::string& what,
                                       std::size_t position)
    : std::runtime_error(what + " (expression offset " +
                         std::to_string(position) + ")"),
      position_(position) {}

// ---------------------------------------------------------------------------
// Tree construction

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::Number;
  n->value = v;
  return n;
}

NodePtr make_symbol(SymbolRef ref) {
  auto n = std::make_shared<Node>();
  n->kind = ref.kind == SymbolRef::Kind::Species ? NodeKind::Species
                                                 : NodeKind::Param;
  n->index = ref.index;
  return n;
}

NodePtr make_binary(NodeKind kind, NodePtr lhs, NodePtr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

NodePtr make_pow(NodePtr base, int exponent) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::Pow;
  n->exponent = exponent;
  n->lhs = std::move(base);
  return n;
}

Expression::Expression(NodePtr root, std::string source)
    : root_(std::move(root)), source_(std::move(source)) {}

Expression Expression::constant(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return Expression(make_number(v), std::string(buf, res.ptr));
}

namespace {

bool is_function_name(std::string_view s) {
  return s == "exp" || s == "log" || s == "min" || s == "max";
}

class Parser {
 public:
  Parser(std::string_view text, const SymbolTable& symbols)
      : text_(text), symbols_(symbols) {}

  NodePtr parse_all() {
    skip_ws();
    if (at_end()) throw ParseError("empty expression", pos_);
    NodePtr e = parse_sum();
    skip_ws();
    if (!at_end())
      throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return e;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }

  void skip_ws() {
    while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                         text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (!at_end() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (at_end())
        throw ParseError(std::string("expected '") + c + "' but input ended",
                         pos_);
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  NodePtr binary(NodeKind kind, NodePtr l, NodePtr r, std::size_t at) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->pos = at;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_product();
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (accept('+'))
        lhs = binary(NodeKind::Add, lhs, parse_product(), at);
      else if (accept('-'))
        lhs = binary(NodeKind::Sub, lhs, parse_product(), at);
      else
        return lhs;
    }
  }

  NodePtr parse_product() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (accept('*'))
        lhs = binary(NodeKind::Mul, lhs, parse_unary(), at);
      else if (accept('/'))
        lhs = binary(NodeKind::Div, lhs, parse_unary(), at);
      else
        return lhs;
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    std::size_t at = pos_;
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->kind = NodeKind::Neg;
      n->pos = at;
      n->lhs = parse_unary();
      return n;
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (!accept('^')) return base;
      skip_ws();
      bool negative = false;
      if (accept('-')) negative = true;
      skip_ws();
      std::size_t start = pos_;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
      if (start == pos_)
        throw ParseError("exponent must be an integer literal", start);
      if (!at_end() && (text_[pos_] == '.' || text_[pos_] == 'e' ||
                        text_[pos_] == 'E'))
        throw ParseError("exponent must be an integer literal", start);
      int value = 0;
      auto res = std::from_chars(text_.data() + start, text_.data() + pos_,
                                 value);
      if (res.ec != std::errc()) throw ParseError("exponent out of range", start);
      auto n = std::make_shared<Node>();
      n->kind = NodeKind::Pow;
      n->pos = at;
      n->exponent = negative ? -value : value;
      n->lhs = std::move(base);
      base = n;
    }
  }

  NodePtr parse_primary() {
    skip_ws();
    if (at_end()) throw ParseError("unexpected end of expression", pos_);
    const char c = text_[pos_];
    const std::size_t at = pos_;
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
      return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                           text_[pos_] == '_'))
        ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      skip_ws();
      if (is_function_name(name) && !at_end() && text_[pos_] == '(')
        return parse_call(name, start);
      return lookup(name, start);
    }
    if (accept('(')) {
      NodePtr inner = parse_sum();
      expect(')');
      return inner;
    }
    throw ParseError(std::string("unexpected '") + c + "'", at);
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                         text_[pos_] == '.'))
      ++pos_;
    if (!at_end() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (!at_end() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (at_end() || !std::isdigit(static_cast<unsigned char>(text_[pos_])))
        pos_ = save;
      else
        while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
          ++pos_;
    }
    double v = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_)
      throw ParseError("malformed number", start);
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Number;
    n->value = v;
    n->pos = start;
    return n;
  }

  NodePtr parse_call(const std::string& name, std::size_t at) {
    expect('(');
    NodePtr a = parse_sum();
    NodePtr b;
    const bool binary_fn = name == "min" || name == "max";
    if (binary_fn) {
      expect(',');
      b = parse_sum();
    }
    expect(')');
    auto n = std::make_shared<Node>();
    n->pos = at;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    if (name == "exp")
      n->kind = NodeKind::Exp;
    else if (name == "log")
      n->kind = NodeKind::Log;
    else if (name == "min")
      n->kind = NodeKind::Min;
    else
      n->kind = NodeKind::Max;
    return n;
  }

  NodePtr lookup(const std::string& name, std::size_t at) {
    auto n = std::make_shared<Node>();
    n->pos = at;
    auto sit = std::find(symbols_.species.begin(), symbols_.species.end(), name);
    auto pit = std::find(symbols_.params.begin(), symbols_.params.end(), name);
    if (sit != symbols_.species.end() && pit != symbols_.params.end())
      throw ParseError("'" + name + "' names both a species and a parameter", at);
    if (sit != symbols_.species.end()) {
      n->kind = NodeKind::Species;
      n->index = static_cast<std::size_t>(sit - symbols_.species.begin());
      return n;
    }
    if (pit != symbols_.params.end()) {
      n->kind = NodeKind::Param;
      n->index = static_cast<std::size_t>(pit - symbols_.params.begin());
      return n;
    }
    throw UnknownIdentifier(name, at);
  }

  std::string_view text_;
  const SymbolTable& symbols_;
  std::size_t pos_ = 0;
};

struct Dual {
  double v;
  double d;
};

double int_pow(double x, int n, std::size_t pos) {
  if (n < 0) {
    if (x == 0.0) throw NumericDomainError("division by zero in power", pos);
    return 1.0 / std::pow(x, -n);
  }
  return std::pow(x, n);
}

double eval_node(const Node& n, const EvalContext& ctx) {
  switch (n.kind) {
    case NodeKind::Number:
      return n.value;
    case NodeKind::Species:
      return ctx.state[n.index];
    case NodeKind::Param:
      return ctx.params[n.index];
    case NodeKind::Add:
      return eval_node(*n.lhs, ctx) + eval_node(*n.rhs, ctx);
    case NodeKind::Sub:
      return eval_node(*n.lhs, ctx) - eval_node(*n.rhs, ctx);
    case NodeKind::Mul:
      return eval_node(*n.lhs, ctx) * eval_node(*n.rhs, ctx);
    case NodeKind::Div: {
      double a = eval_node(*n.lhs, ctx);
      double b = eval_node(*n.rhs, ctx);
      if (b == 0.0) throw NumericDomainError("division by zero", n.pos);
      return a / b;
    }
    case NodeKind::Neg:
      return -eval_node(*n.lhs, ctx);
    case NodeKind::Pow:
      return int_pow(eval_node(*n.lhs, ctx), n.exponent, n.pos);
    case NodeKind::Exp:
      return std::exp(eval_node(*n.lhs, ctx));
    case NodeKind::Log: {
      double a = eval_node(*n.lhs, ctx);
      if (!(a > 0.0)) throw NumericDomainError("log of non-positive value", n.pos);
      return std::log(a);
    }
    case NodeKind::Min:
      return std::min(eval_node(*n.lhs, ctx), eval_node(*n.rhs, ctx));
    case NodeKind::Max:
      return std::max(eval_node(*n.lhs, ctx), eval_node(*n.rhs, ctx));
  }
  return 0.0;
}

Dual eval_dual(const Node& n, const EvalContext& ctx, SymbolRef wrt) {
  switch (n.kind) {
    case NodeKind::Number:
      return {n.value, 0.0};
    case NodeKind::Species:
      return {ctx.state[n.index],
              wrt == SymbolRef::species(n.index) ? 1.0 : 0.0};
    case NodeKind::Param:
      return {ctx.params[n.index], wrt == SymbolRef::param(n.index) ? 1.0 : 0.0};
    case NodeKind::Add: {
      Dual a = eval_dual(*n.lhs, ctx, wrt), b = eval_dual(*n.rhs, ctx, wrt);
      return {a.v + b.v, a.d + b.d};
    }
    case NodeKind::Sub: {
      Dual a = eval_dual(*n.lhs, ctx, wrt), b = eval_dual(*n.rhs, ctx, wrt);
      return {a.v - b.v, a.d - b.d};
    }
    case NodeKind::Mul: {
      Dual a = eval_dual(*n.lhs, ctx, wrt), b = eval_dual(*n.rhs, ctx, wrt);
      return {a.v * b.v, a.d * b.v + a.v * b.d};
    }
    case NodeKind::Div: {
      Dual a = eval_dual(*n.lhs, ctx, wrt), b = eval_dual(*n.rhs, ctx, wrt);
      if (b.v == 0.0) throw NumericDomainError("division by zero", n.pos);
      return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
    }
    case NodeKind::Neg: {
      Dual a = eval_dual(*n.lhs, ctx, wrt);
      return {-a.v, -a.d};
    }
    case NodeKind::Pow: {
      Dual a = eval_dual(*n.lhs, ctx, wrt);
      if (n.exponent == 0) return {1.0, 0.0};
      double v = int_pow(a.v, n.exponent, n.pos);
      double dv = n.exponent * int_pow(a.v, n.exponent - 1, n.pos) * a.d;
      return {v, dv};
    }
    case NodeKind::Exp: {
      Dual a = eval_dual(*n.lhs, ctx, wrt);
      double e = std::exp(a.v);
      return {e, e * a.d};
    }
    case NodeKind::Log: {
      Dual a = eval_dual(*n.lhs, ctx, wrt);
      if (!(a.v > 0.0)) throw NumericDomainError("log of non-positive value", n.pos);
      return {std::log(a.v), a.d / a.v};
    }
    case NodeKind::Min: {
      Dual a = eval_dual(*n.lhs, ctx, wrt), b = eval_dual(*n.rhs, ctx, wrt);
      return a.v <= b.v ? a : b;
    }
    case NodeKind::Max: {
      Dual a = eval_dual(*n.lhs, ctx, wrt), b = eval_dual(*n.rhs, ctx, wrt);
      return a.v >= b.v ? a : b;
    }
  }
  return {0.0, 0.0};
}

void print_node(const Node& n, const SymbolTable& sym, std::string& out) {
  auto bin = [&](const char* op) {
    out += '(';
    print_node(*n.lhs, sym, out);
    out += op;
    print_node(*n.rhs, sym, out);
    out += ')';
  };
  switch (n.kind) {
    case NodeKind::Number: {
      char buf[32];
      auto res = std::to_chars(buf, buf + sizeof buf, n.value);
      out.append(buf, res.ptr);
      return;
    }
    case NodeKind::Species:
      out += sym.species.at(n.index);
      return;
    case NodeKind::Param:
      out += sym.params.at(n.index);
      return;
    case NodeKind::Add:
      return bin("+");
    case NodeKind::Sub:
      return bin("-");
    case NodeKind::Mul:
      return bin("*");
    case NodeKind::Div:
      return bin("/");
    case NodeKind::Neg:
      out += "(-";
      print_node(*n.lhs, sym, out);
      out += ')';
      return;
    case NodeKind::Pow:
      out += '(';
      print_node(*n.lhs, sym, out);
      out += '^';
      out += std::to_string(n.exponent);
      out += ')';
      return;
    case NodeKind::Exp:
    case NodeKind::Log:
      out += n.kind == NodeKind::Exp ? "exp(" : "log(";
      print_node(*n.lhs, sym, out);
      out += ')';
      return;
    case NodeKind::Min:
    case NodeKind::Max:
      out += n.kind == NodeKind::Min ? "min(" : "max(";
      print_node(*n.lhs, sym, out);
      out += ',';
      print_node(*n.rhs, sym, out);
      out += ')';
      return;
  }
}

std::size_t node_depth(const Node& n) {
  std::size_t d = 0;
  if (n.lhs) d = std::max(d, node_depth(*n.lhs));
  if (n.rhs) d = std::max(d, node_depth(*n.rhs));
  return d + 1;
}

void collect(const Node& n, NodeKind kind, std::set<std::size_t>& out) {
  if (n.kind == kind) out.insert(n.index);
  if (n.lhs) collect(*n.lhs, kind, out);
  if (n.rhs) collect(*n.rhs, kind, out);
}

}  // namespace

Expression parse(std::string_view text, const SymbolTable& symbols) {
  Parser p(text, symbols);
  return Expression(p.parse_all(), std::string(text));
}

double evaluate(const Expression& e, const EvalContext& ctx) {
  return eval_node(e.root(), ctx);
}

double derivative_eval(const Expression& e, const EvalContext& ctx,
                       SymbolRef wrt) {
  return eval_dual(e.root(), ctx, wrt).d;
}

std::string Expression::to_string(const SymbolTable& symbols) const {
  std::string out;
  print_node(*root_, symbols, out);
  return out;
}

std::size_t Expression::depth() const { return node_depth(*root_); }

std::vector<std::size_t> Expression::species_used() const {
  std::set<std::size_t> s;
  collect(*root_, NodeKind::Species, s);
  return {s.begin(), s.end()};
}

std::vector<std::size_t> Expression::params_used() const {
  std::set<std::size_t> s;
  collect(*root_, NodeKind::Param, s);
  return {s.begin(), s.end()};
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Number:
      if (a.value != b.value) return false;
      break;
    case NodeKind::Species:
    case NodeKind::Param:
      if (a.index != b.index) return false;
      break;
    case NodeKind::Pow:
      if (a.exponent != b.exponent) return false;
      break;
    default:
      break;
  }
  if ((a.lhs == nullptr) != (b.lhs == nullptr)) return false;
  if ((a.rhs == nullptr) != (b.rhs == nullptr)) return false;
  if (a.lhs && !structurally_equal(*a.lhs, *b.lhs)) return false;
  if (a.rhs && !structurally_equal(*a.rhs, *b.rhs)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Compiled form

namespace {

bool is_live(std::size_t param, std::span<const std::size_t> live) {
  return std::find(live.begin(), live.end(), param) != live.end();
}

// Value of a subtree that touches no state and no live parameter, if it
// evaluates without a domain error.
std::optional<double> fold(const Node& n, std::span<const double> params,
                           std::span<const std::size_t> live) {
  switch (n.kind) {
    case NodeKind::Number:
      return n.value;
    case NodeKind::Species:
      return std::nullopt;
    case NodeKind::Param:
      if (is_live(n.index, live)) return std::nullopt;
      return params[n.index];
    default:
      break;
  }
  auto a = fold(*n.lhs, params, live);
  if (!a) return std::nullopt;
  std::optional<double> b;
  if (n.rhs) {
    b = fold(*n.rhs, params, live);
    if (!b) return std::nullopt;
  }
  switch (n.kind) {
    case NodeKind::Add:
      return *a + *b;
    case NodeKind::Sub:
      return *a - *b;
    case NodeKind::Mul:
      return *a * *b;
    case NodeKind::Div:
      if (*b == 0.0) return std::nullopt;
      return *a / *b;
    case NodeKind::Neg:
      return -*a;
    case NodeKind::Pow:
      if (n.exponent < 0 && *a == 0.0) return std::nullopt;
      return int_pow(*a, n.exponent, n.pos);
    case NodeKind::Exp:
      return std::exp(*a);
    case NodeKind::Log:
      if (!(*a > 0.0)) return std::nullopt;
      return std::log(*a);
    case NodeKind::Min:
      return std::min(*a, *b);
    case NodeKind::Max:
      return std::max(*a, *b);
    default:
      return std::nullopt;
  }
}

}  // namespace

CompiledExpr::CompiledExpr(const Expression& e, std::span<const double> params,
                           std::span<const std::size_t> live_params) {
  emit(e.root(), params, live_params);
  // Stack high-water mark of the postfix program.
  std::size_t depth = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const:
      case Op::State:
      case Op::Param:
        ++depth;
        break;
      case Op::Neg:
      case Op::Pow:
      case Op::Exp:
      case Op::Log:
        break;
      default:
        --depth;
        break;
    }
    max_stack_ = std::max(max_stack_, depth);
  }
}

void CompiledExpr::emit(const Node& n, std::span<const double> params,
                        std::span<const std::size_t> live) {
  Instr in{};
  in.pos = static_cast<std::uint32_t>(n.pos);
  if (auto v = fold(n, params, live)) {
    in.op = Op::Const;
    in.c = *v;
    code_.push_back(in);
    return;
  }
  switch (n.kind) {
    case NodeKind::Species:
      in.op = Op::State;
      in.index = static_cast<std::uint32_t>(n.index);
      code_.push_back(in);
      return;
    case NodeKind::Param:
      in.op = Op::Param;
      in.index = static_cast<std::uint32_t>(n.index);
      code_.push_back(in);
      return;
    default:
      break;
  }
  emit(*n.lhs, params, live);
  if (n.rhs) emit(*n.rhs, params, live);
  switch (n.kind) {
    case NodeKind::Add: in.op = Op::Add; break;
    case NodeKind::Sub: in.op = Op::Sub; break;
    case NodeKind::Mul: in.op = Op::Mul; break;
    case NodeKind::Div: in.op = Op::Div; break;
    case NodeKind::Neg: in.op = Op::Neg; break;
    case NodeKind::Pow: in.op = Op::Pow; in.n = n.exponent; break;
    case NodeKind::Exp: in.op = Op::Exp; break;
    case NodeKind::Log: in.op = Op::Log; break;
    case NodeKind::Min: in.op = Op::Min; break;
    case NodeKind::Max: in.op = Op::Max; break;
    default: break;
  }
  code_.push_back(in);
}

bool CompiledExpr::is_constant() const {
  return code_.size() == 1 && code_[0].op == Op::Const;
}

double CompiledExpr::eval(std::span<const double> state,
                          std::span<const double> params) const {
  constexpr std::size_t kInline = 32;
  double small[kInline];
  small[0] = 0.0;  // empty programs evaluate to zero
  std::vector<double> big;
  double* st = small;
  if (max_stack_ > kInline) {
    big.resize(max_stack_);
    st = big.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: st[sp++] = in.c; break;
      case Op::State: st[sp++] = state[in.index]; break;
      case Op::Param: st[sp++] = params[in.index]; break;
      case Op::Add: --sp; st[sp - 1] += st[sp]; break;
      case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
      case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
      case Op::Div:
        --sp;
        if (st[sp] == 0.0) throw NumericDomainError("division by zero", in.pos);
        st[sp - 1] /= st[sp];
        break;
      case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
      case Op::Pow: st[sp - 1] = int_pow(st[sp - 1], in.n, in.pos); break;
      case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
      case Op::Log:
        if (!(st[sp - 1] > 0.0))
          throw NumericDomainError("log of non-positive value", in.pos);
        st[sp - 1] = std::log(st[sp - 1]);
        break;
      case Op::Min: --sp; st[sp - 1] = std::min(st[sp - 1], st[sp]); break;
      case Op::Max: --sp; st[sp - 1] = std::max(st[sp - 1], st[sp]); break;
    }
  }
  return st[0];
}

double CompiledExpr::eval_grad(std::span<const double> state,
                               std::span<const double> params,
                               std::span<const SymbolRef> dirs,
                               std::span<double> grad) const {
  const std::size_t w = dirs.size() + 1;
  thread_local std::vector<double> scratch;
  if (scratch.size() < max_stack_ * w) scratch.resize(max_stack_ * w);
  double* st = scratch.data();
  std::size_t sp = 0;  // entries, each of width w: value then partials
  auto top = [&](std::size_t back) { return st + (sp - back) * w; };
  auto push_seed = [&](double v, SymbolRef ref) {
    double* e = st + sp * w;
    e[0] = v;
    for (std::size_t d = 0; d < dirs.size(); ++d) e[d + 1] = dirs[d] == ref;
    ++sp;
  };
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: {
        double* e = st + sp * w;
        e[0] = in.c;
        std::fill(e + 1, e + w, 0.0);
        ++sp;
        break;
      }
      case Op::State:
        push_seed(state[in.index], SymbolRef::species(in.index));
        break;
      case Op::Param:
        push_seed(params[in.index], SymbolRef::param(in.index));
        break;
      case Op::Add: {
        double *a = top(2), *b = top(1);
        for (std::size_t i = 0; i < w; ++i) a[i] += b[i];
        --sp;
        break;
      }
      case Op::Sub: {
        double *a = top(2), *b = top(1);
        for (std::size_t i = 0; i < w; ++i) a[i] -= b[i];
        --sp;
        break;
      }
      case Op::Mul: {
        double *a = top(2), *b = top(1);
        for (std::size_t i = 1; i < w; ++i) a[i] = a[i] * b[0] + a[0] * b[i];
        a[0] *= b[0];
        --sp;
        break;
      }
      case Op::Div: {
        double *a = top(2), *b = top(1);
        if (b[0] == 0.0) throw NumericDomainError("division by zero", in.pos);
        const double inv = 1.0 / b[0];
        const double q = a[0] * inv;
        for (std::size_t i = 1; i < w; ++i) a[i] = (a[i] - q * b[i]) * inv;
        a[0] = q;
        --sp;
        break;
      }
      case Op::Neg: {
        double* a = top(1);
        for (std::size_t i = 0; i < w; ++i) a[i] = -a[i];
        break;
      }
      case Op::Pow: {
        double* a = top(1);
        if (in.n == 0) {
          a[0] = 1.0;
          std::fill(a + 1, a + w, 0.0);
          break;
        }
        const double dv = in.n * int_pow(a[0], in.n - 1, in.pos);
        for (std::size_t i = 1; i < w; ++i) a[i] *= dv;
        a[0] = int_pow(a[0], in.n, in.pos);
        break;
      }
      case Op::Exp: {
        double* a = top(1);
        a[0] = std::exp(a[0]);
        for (std::size_t i = 1; i < w; ++i) a[i] *= a[0];
        break;
      }
      case Op::Log: {
        double* a = top(1);
        if (!(a[0] > 0.0))
          throw NumericDomainError("log of non-positive value", in.pos);
        for (std::size_t i = 1; i < w; ++i) a[i] /= a[0];
        a[0] = std::log(a[0]);
        break;
      }
      case Op::Min:
      case Op::Max: {
        double *a = top(2), *b = top(1);
        const bool keep_a = in.op == Op::Min ? a[0] <= b[0] : a[0] >= b[0];
        if (!keep_a) std::copy(b, b + w, a);
        --sp;
        break;
      }
    }
  }
  for (std::size_t d = 0; d < dirs.size(); ++d) grad[d] = st[d + 1];
  return st[0];
}

}  // namespace hybridsens
