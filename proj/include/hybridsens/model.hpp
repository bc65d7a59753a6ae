#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hybridsens/expr.hpp"

namespace hybridsens {

using Json = nlohmann::ordered_json;

/// Schema, binding or structural violation in a model or scaling document.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Species {
  std::string name;
  double initial = 0.0;
  /// Set on reduced models: the species is a continuous level, so mass-action
  /// factors use monomials z^nu/nu! instead of falling factorials.
  bool continuous = false;
};

struct RateLaw {
  enum class Kind { MassAction, Custom };
  Kind kind = Kind::MassAction;
  /// kappa (parameters only) for mass action, the full formula otherwise.
  Expression expr;
};

struct Reaction {
  std::string name;
  std::vector<std::pair<std::size_t, int>> reactants;
  std::vector<std::pair<std::size_t, int>> products;
  RateLaw rate;

  int reactant_count(std::size_t species) const;
  int product_count(std::size_t species) const;
};

/// Dense S x K integer matrix; column k is the net change of reaction k.
struct StoichiometryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> data;  // row-major

  int operator()(std::size_t i, std::size_t k) const { return data[i * cols + k]; }
  std::vector<int> column(std::size_t k) const;
};

class ReactionNetwork {
 public:
  ReactionNetwork() = default;
  /// Binds and validates; throws ValidationError.
  ReactionNetwork(std::vector<Species> species, std::vector<Reaction> reactions,
                  std::vector<std::pair<std::string, double>> parameters,
                  std::vector<std::pair<std::string, Expression>> observables);

  const std::vector<Species>& species() const { return species_; }
  const std::vector<Reaction>& reactions() const { return reactions_; }
  std::size_t num_species() const { return species_.size(); }
  std::size_t num_reactions() const { return reactions_.size(); }

  const std::vector<std::string>& param_names() const { return symbols_.params; }
  const std::vector<double>& param_values() const { return param_values_; }
  const SymbolTable& symbols() const { return symbols_; }
  const std::vector<std::pair<std::string, Expression>>& observables() const {
    return observables_;
  }

  std::optional<std::size_t> find_species(std::string_view name) const;
  std::optional<std::size_t> find_param(std::string_view name) const;
  std::optional<std::size_t> find_reaction(std::string_view name) const;
  std::size_t param_index(std::string_view name) const;
  const Expression& observable(std::string_view name) const;

  std::vector<double> initial_state() const;
  StoichiometryMatrix stoichiometry() const;
  const std::vector<int>& zeta(std::size_t k) const { return zeta_[k]; }

  /// Full propensity as an expression over state and parameters (the
  /// mass-action product is expanded here).
  const Expression& propensity_expression(std::size_t k) const {
    return propensity_exprs_[k];
  }
  /// Species whose value the propensity of k reads.
  const std::vector<std::size_t>& propensity_dependencies(std::size_t k) const {
    return dependencies_[k];
  }

  /// Non-negative rate. Coordinates in [-1e-9*scale, 0) are clamped to zero
  /// before evaluation; anything more negative is a NumericDomainError.
  double propensity(std::size_t k, std::span<const double> state,
                    std::span<const double> params) const;

  double observable_value(std::string_view name, std::span<const double> state,
                          std::span<const double> params) const;
  /// Partial derivatives of the observable along the given (continuous)
  /// species.
  std::vector<double> observable_gradient(
      std::string_view name, std::span<const double> state,
      std::span<const double> params,
      std::span<const std::size_t> continuous) const;

  ReactionNetwork with_param(std::string_view name, double value) const;
  ReactionNetwork with_initial(std::span<const double> initial) const;

  Json to_json() const;

 private:
  void bind();

  std::vector<Species> species_;
  std::vector<Reaction> reactions_;
  SymbolTable symbols_;
  std::vector<double> param_values_;
  std::vector<std::pair<std::string, Expression>> observables_;
  std::vector<std::vector<int>> zeta_;
  std::vector<Expression> propensity_exprs_;
  std::vector<std::vector<std::size_t>> dependencies_;
};

/// Clamp tolerance for slightly negative coordinates (Euler undershoot).
inline constexpr double kNegativeStateTolerance = 1e-9;

/// Copies `state` into `out` with near-zero negatives clamped; throws
/// NumericDomainError for coordinates below -tol*scale.
void clamp_state(std::span<const double> state, std::span<double> out);

ReactionNetwork parse_network(const Json& doc);
Json read_json_file(const std::filesystem::path& path);
ReactionNetwork load_model(const std::filesystem::path& path);

/// The mass-action product for reaction k as a tree, treating species with
/// `continuous` set via monomials.
NodePtr mass_action_tree(const Reaction& r, const std::vector<Species>& species);

bool is_identifier(std::string_view s);

}  // namespace hybridsens
