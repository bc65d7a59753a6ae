#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hybridsens {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifier : public ParseError {
 public:
  UnknownIdentifier(std::string symbol, std::size_t offset);
  const std::string& symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

/// Division by zero, log of a non-positive value, or an out-of-domain state.
class NumericDomainError : public std::runtime_error {
 public:
  NumericDomainError(const std::string& what, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Declared names an expression is bound against. Species and parameter
/// namespaces must be disjoint.
struct SymbolTable {
  std::vector<std::string> species;
  std::vector<std::string> params;
};

struct SymbolRef {
  enum class Kind : std::uint8_t { Species, Param };
  Kind kind;
  std::size_t index;

  static SymbolRef species(std::size_t i) { return {Kind::Species, i}; }
  static SymbolRef param(std::size_t i) { return {Kind::Param, i}; }
  bool operator==(const SymbolRef&) const = default;
};

struct EvalContext {
  std::span<const double> state;
  std::span<const double> params;
};

enum class NodeKind : std::uint8_t {
  Number,
  Species,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Pow,
  Exp,
  Log,
  Min,
  Max,
};

struct Node {
  NodeKind kind;
  double value = 0.0;    // Number
  std::size_t index = 0; // Species / Param
  int exponent = 0;      // Pow
  std::size_t pos = 0;   // byte offset in the source text
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

using NodePtr = std::shared_ptr<const Node>;

/// Immutable bound expression tree.
class Expression {
 public:
  Expression() = default;
  Expression(NodePtr root, std::string source);

  static Expression constant(double v);

  const Node& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  bool empty() const { return root_ == nullptr; }

  /// Text the expression was parsed from (or generated for synthetic trees).
  const std::string& source() const { return source_; }

  /// Fully parenthesised form that reparses to the same tree.
  std::string to_string(const SymbolTable& symbols) const;

  std::size_t depth() const;

  /// Species indices and parameter indices referenced anywhere in the tree.
  std::vector<std::size_t> species_used() const;
  std::vector<std::size_t> params_used() const;

 private:
  NodePtr root_;
  std::string source_;
};

Expression parse(std::string_view text, const SymbolTable& symbols);

double evaluate(const Expression& e, const EvalContext& ctx);

/// Exact derivative by forward-mode dual numbers. min/max follow the smaller
/// argument; ties follow the first argument.
double derivative_eval(const Expression& e, const EvalContext& ctx,
                       SymbolRef wrt);

bool structurally_equal(const Node& a, const Node& b);

// Tree builders used when synthesising propensities (mass-action limits).
NodePtr make_number(double v);
NodePtr make_symbol(SymbolRef ref);
NodePtr make_binary(NodeKind kind, NodePtr lhs, NodePtr rhs);
NodePtr make_pow(NodePtr base, int exponent);

/// Flat postfix program for hot loops. Parameters not marked live are folded
/// into constants at compile time, and constant subtrees are folded.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const Expression& e, std::span<const double> params,
               std::span<const std::size_t> live_params = {});

  double eval(std::span<const double> state,
              std::span<const double> params = {}) const;

  /// Value plus partial derivatives along `dirs` (written to `grad`).
  double eval_grad(std::span<const double> state,
                   std::span<const double> params,
                   std::span<const SymbolRef> dirs,
                   std::span<double> grad) const;

  bool is_constant() const;
  std::size_t size() const { return code_.size(); }

 private:
  enum class Op : std::uint8_t {
    Const,
    State,
    Param,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Pow,
    Exp,
    Log,
    Min,
    Max,
  };
  struct Instr {
    Op op;
    std::int32_t n = 0;
    std::uint32_t index = 0;
    std::uint32_t pos = 0;
    double c = 0.0;
  };

  void emit(const Node& node, std::span<const double> params,
            std::span<const std::size_t> live);

  std::vector<Instr> code_;
  std::size_t max_stack_ = 0;
};

}  // namespace hybridsens
