#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hybridsens/rates.hpp"
#include "hybridsens/rng.hpp"
#include "hybridsens/scaling.hpp"

namespace hybridsens {

/// Non-finite continuous state or exhausted firing budget.
class IntegrationFailure : public std::runtime_error {
 public:
  IntegrationFailure(const std::string& what, double t)
      : std::runtime_error(what), time(t) {}
  double time;
};

struct StepConfig {
  double dt = 0.0;  // 0 selects T / 50000
  std::vector<double> record_grid;
  std::size_t max_events = 100'000'000;

  double step(double T) const { return dt > 0.0 ? dt : T / 50000.0; }
};

/// Number of Euler steps covering [0, T]; the last one may be shorter.
std::size_t step_count(double T, double dt);

struct PdmpPathState {
  double t = 0.0;
  std::vector<double> z;   // every species; continuous ones hold levels
  std::vector<double> Tk;  // internal times, one per discrete reaction
  std::vector<double> Pk;  // thresholds
  std::vector<double> y;   // one per continuous species
  Eigen::MatrixXd Phi;
};

struct PdmpCapture {
  std::size_t step = 0;
  double t = 0.0;
  std::vector<double> z;
  std::vector<double> y;
  std::vector<double> D;  // D_theta lambda_k per discrete reaction
};

struct PdmpRunOptions {
  bool augmented = false;  // integrate y
  bool with_phi = false;   // integrate Phi as well
  bool phi_quadrature = false;  // accumulate the Phi-based reconstruction of y
  bool record_increments = false;
  std::vector<std::size_t> capture_steps;  // sorted
  std::vector<double> record_grid;
};

struct PdmpResult {
  PdmpPathState final;
  std::vector<std::vector<double>> grid_states;
  std::vector<PdmpCapture> captures;
  std::size_t firings = 0;
  std::vector<double> increments;  // successive P_k increments
  std::vector<double> y_quadrature;
};

/// Discrete rates under the tilt
///   lambda^(z, theta0) = lambda(z, theta0) + (theta0 - theta) <grad lambda(z, theta), y>
/// with y and the continuous flow taken at the nominal theta.
struct TiltSpec {
  double theta0 = 0.0;
};

/// A reduced model compiled at one parameter vector. The engine is
/// immutable and shared between threads; per-path state lives in the result.
class PdmpEngine {
 public:
  PdmpEngine(const ReducedPDMP& m, std::vector<double> params,
             std::optional<std::size_t> theta = std::nullopt,
             std::optional<TiltSpec> tilt = std::nullopt);

  const ReducedPDMP& model() const { return *m_; }
  const std::vector<double>& params() const { return flow_.params(); }
  std::optional<std::size_t> theta() const { return theta_; }

  PdmpPathState initial_state() const;

  /// Hybrid path from `start` (assumed to sit on grid step `first_step`)
  /// to T. Draws one exponential per discrete reaction for the initial
  /// thresholds only when start.Pk is empty.
  PdmpResult run(PdmpPathState start, std::size_t first_step, double T,
                 double dt, UniformSource& rng, const PdmpRunOptions& opt,
                 std::size_t max_events = 100'000'000) const;

  /// Tilted discrete rate of reaction index j in discrete_reactions (or the
  /// plain rate when no tilt is configured).
  double discrete_rate(std::size_t j, std::span<const double> z,
                       std::span<const double> y) const;
  /// D_theta lambda for discrete reaction index j at (z, y).
  double discrete_derivative(std::size_t j, std::span<const double> z,
                             std::span<const double> y) const;

 private:
  friend class CoupledPdmp;
  struct Component;
  void prepare(Component& c) const;
  void advance(Component& c, double h, bool augmented, bool with_phi) const;
  void fire(Component& c, std::size_t j) const;

  const ReducedPDMP* m_;
  RateTable flow_;
  std::optional<RateTable> jump_;  // tilted runs: discrete rates at theta0
  std::optional<std::size_t> theta_;
  std::optional<TiltSpec> tilt_;
  std::vector<std::size_t> cont_;   // continuous species
  std::vector<std::size_t> rc_;     // continuous reactions
  std::vector<std::size_t> rd_;     // discrete reactions
  std::vector<bool> rc_static_, rd_static_;  // reads no continuous species
  std::vector<std::vector<std::pair<std::size_t, double>>> rc_zeta_;  // local idx
  std::vector<std::vector<std::pair<std::size_t, int>>> rd_zeta_;     // species idx
  std::vector<std::size_t> local_of_;  // species -> continuous slot
  std::vector<SymbolRef> dirs_;        // theta then continuous species
};

PdmpResult pdmp_simulate(const ReducedPDMP& m, std::span<const double> params,
                         double T, const StepConfig& cfg, UniformSource& rng);

PdmpResult pdmp_simulate_augmented(const ReducedPDMP& m,
                                   std::span<const double> params,
                                   std::size_t theta, double T,
                                   const StepConfig& cfg, UniformSource& rng,
                                   bool with_phi);

struct CoupledPdmpResult {
  std::vector<double> a;  // terminal z
  std::vector<double> b;
  double tau = std::numeric_limits<double>::infinity();
  std::size_t events = 0;
  /// max over sampled steps of residual_a * residual_b (0 by construction)
  double max_residual_product = 0.0;
};

/// Split coupling of two PDMPs on a shared Euler grid: per discrete reaction
/// a common clock at min(a, b) and residual clocks a - min, b - min.
class CoupledPdmp {
 public:
  CoupledPdmp(const PdmpEngine& a, const PdmpEngine& b);

  /// Both components start at step `first_step`. Augmented y is integrated
  /// only when either engine is tilted.
  CoupledPdmpResult run(std::span<const double> za, std::span<const double> zb,
                        std::size_t first_step, double T, double dt,
                        UniformSource& rng,
                        std::size_t max_events = 100'000'000) const;

 private:
  const PdmpEngine* a_;
  const PdmpEngine* b_;
};

/// Validator for the Phi representation: relative difference between y(T)
/// from direct Euler and the quadrature Phi(T) sum dt Phi_n^-1 b_n.
double y_phi_relative_error(const PdmpResult& r);

}  // namespace hybridsens
