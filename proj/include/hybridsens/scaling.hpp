#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/rational.hpp>

#include "hybridsens/model.hpp"

namespace hybridsens {

using Rational = boost::rational<std::int64_t>;

/// A scaling choice that cannot be turned into a hybrid model (fast discrete
/// reactions that need a QSA pre-reduction, nothing changes, ...).
class DerivationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accepts "p/q", "p", an integer, or a JSON number that is an exact
/// integer. Anything else is a ValidationError.
Rational parse_rational(const Json& v);
std::string to_string(const Rational& q);
double to_double(const Rational& q);

struct ScalingSpec {
  std::vector<Rational> alpha;  // per species
  std::vector<Rational> beta;   // per reaction
  double N0 = 0.0;
  std::optional<Rational> gamma;  // nullopt = "auto"
  std::vector<std::pair<std::string, std::string>> reduced_formulas;

  const std::string* reduced_formula(std::string_view reaction) const;
};

ScalingSpec parse_scaling(const Json& doc, const ReactionNetwork& n);
ScalingSpec load_scaling(const std::filesystem::path& path,
                         const ReactionNetwork& n);

enum class ReactionClass { Continuous, Discrete, Dropped };
const char* to_string(ReactionClass c);

struct TimescaleReport {
  std::vector<Rational> rho;
  std::vector<std::optional<Rational>> gamma_i;  // nullopt: species untouched
  Rational r;
  Rational gamma;  // the observation timescale actually used
  std::vector<ReactionClass> classification;
  StoichiometryMatrix zeta_hat;
  std::vector<std::string> warnings;

  std::string to_text(const ReactionNetwork& n) const;
  Json to_json(const ReactionNetwork& n) const;
};

std::vector<Rational> natural_timescales(const ReactionNetwork& n,
                                         const ScalingSpec& s);
std::pair<std::vector<std::optional<Rational>>, Rational>
species_timescales_and_r(const ReactionNetwork& n, const ScalingSpec& s,
                         const std::vector<Rational>& rho);
TimescaleReport classify_and_truncate(const ReactionNetwork& n,
                                      const ScalingSpec& s,
                                      const std::vector<Rational>& rho,
                                      const Rational& r);
/// All three steps, with gamma = r unless the scaling file fixes it.
TimescaleReport timescale_report(const ReactionNetwork& n, const ScalingSpec& s);

/// lambda^N_k: mass action with falling factorials in steps of N^-alpha_i,
/// evaluated at the scaled state z with the scaled constant
/// kappa_k = kappa'_k N^-beta_k. The network parameter named "N0" (if any)
/// is set to N before evaluating kappa'.
double scaled_propensity(const ReactionNetwork& n, const ScalingSpec& s,
                         std::size_t k, std::span<const double> z, double N,
                         std::span<const double> params);

/// Reduced (hybrid) model. The network holds every species in the original
/// order; continuous species carry Species::continuous.
struct ReducedPDMP {
  ReactionNetwork net;
  std::vector<std::size_t> continuous_species;
  std::vector<std::size_t> discrete_species;
  std::vector<std::size_t> continuous_reactions;
  std::vector<std::size_t> discrete_reactions;

  Json to_json() const;
};

/// Limit propensity of reaction k as an expression over the original
/// network's symbols: kappa_k times falling factorials on discrete species
/// and monomials on continuous ones, or the user's reduced formula.
Expression limit_propensity(const ReactionNetwork& n, const ScalingSpec& s,
                            const TimescaleReport& rep, std::size_t k);

ReducedPDMP derive_reduced_model(const ReactionNetwork& n, const ScalingSpec& s,
                                 const TimescaleReport& rep);
ReducedPDMP derive_reduced_model(const ReactionNetwork& n, const ScalingSpec& s);

/// Reads a {kind:"pdmp", ...} document. Continuous reactions must only move
/// continuous species.
ReducedPDMP parse_reduced(const Json& doc);
ReducedPDMP load_reduced(const std::filesystem::path& path);

/// Treats every species as discrete and every reaction as discrete.
ReducedPDMP trivial_reduction(const ReactionNetwork& n);

}  // namespace hybridsens
