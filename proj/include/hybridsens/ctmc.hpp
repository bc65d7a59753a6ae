#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "hybridsens/model.hpp"
#include "hybridsens/rates.hpp"
#include "hybridsens/rng.hpp"
#include "hybridsens/scaling.hpp"

namespace hybridsens {

struct CtmcPath {
  std::vector<double> initial;
  std::vector<double> times;
  std::vector<std::uint32_t> reactions;
  std::vector<std::vector<double>> states;  // state after each event
  double T = 0.0;
};

struct CtmcOptions {
  std::vector<double> grid;  // sorted sample times in [0, T]
  std::size_t max_events = 200'000'000;
  bool record_events = false;
};

struct CtmcResult {
  std::vector<double> final_state;
  std::vector<std::vector<double>> grid_states;
  std::size_t events = 0;
  bool absorbed = false;
  CtmcPath path;  // filled when record_events is set
};

/// max_events was hit; `partial` holds what was generated.
class TruncatedPathError : public std::runtime_error {
 public:
  TruncatedPathError(const std::string& what, CtmcResult partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  CtmcResult partial;
};

/// Exact simulators for one network at fixed parameters.
class CtmcSimulator {
 public:
  CtmcSimulator(const ReactionNetwork& n, std::vector<double> params);

  /// Gillespie direct method: one uniform for the waiting time, one for the
  /// reaction choice.
  CtmcResult ssa_direct(std::span<const double> x0, double T, UniformSource& rng,
                        const CtmcOptions& opt = {}) const;

  /// Random time change with per-reaction internal times and unit
  /// exponential thresholds (next reaction method).
  CtmcResult nrm(std::span<const double> x0, double T, UniformSource& rng,
                 const CtmcOptions& opt = {}) const;

  const RateTable& rates() const { return rates_; }
  const ReactionNetwork& network() const { return *net_; }

 private:
  const ReactionNetwork* net_;
  RateTable rates_;
  std::vector<std::vector<std::pair<std::size_t, int>>> moves_;
  friend class CoupledCtmc;
};

CtmcResult ssa_direct(const ReactionNetwork& n, std::span<const double> params,
                      std::span<const double> x0, double T, UniformSource& rng,
                      const CtmcOptions& opt = {});
CtmcResult nrm_time_change(const ReactionNetwork& n,
                           std::span<const double> params,
                           std::span<const double> x0, double T,
                           UniformSource& rng, const CtmcOptions& opt = {});

struct CoupledCtmcResult {
  std::vector<double> a;
  std::vector<double> b;
  double tau = std::numeric_limits<double>::infinity();  // first decoupling
  std::size_t events = 0;
};

/// Split coupling of two copies of the same network (possibly at different
/// parameters): per reaction a common clock at rate min(a_k, b_k) plus two
/// residual clocks, all advanced by the modified next reaction method.
class CoupledCtmc {
 public:
  CoupledCtmc(const CtmcSimulator& a, const CtmcSimulator& b);
  CoupledCtmcResult run(std::span<const double> xa, std::span<const double> xb,
                        double t0, double T, UniformSource& rng,
                        std::size_t max_events = 200'000'000) const;

 private:
  const CtmcSimulator* a_;
  const CtmcSimulator* b_;
};

/// Initial copy numbers for the process at scale N: round(N^alpha * z0) with
/// z0 = N0^-alpha * X(0).
std::vector<double> scaled_initial_counts(const ReactionNetwork& n,
                                          const ScalingSpec& s, double N);

/// Diagonal of Lambda_N.
std::vector<double> scale_factors(const ScalingSpec& s, double N);

/// Exact CTMC at scale N (network parameter "N0" set to N), run to N^gamma T
/// and reported as Lambda_N X(N^gamma t) on `grid` (times in the scaled
/// clock). Returns the grid states; the last entry is time T.
std::vector<std::vector<double>> simulate_scaled(const ReactionNetwork& n,
                                                 const ScalingSpec& s, double N,
                                                 const Rational& gamma,
                                                 std::span<const double> params,
                                                 double T, UniformSource& rng,
                                                 std::vector<double> grid = {});

}  // namespace hybridsens
