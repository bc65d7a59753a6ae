#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hybridsens/pdmp.hpp"
#include "hybridsens/scaling.hpp"

namespace hybridsens {

enum class SensMethod { PdmpDecomposition, CfdPdmp, CfdCtmc, IpaCtmc, TiltedFd };

const char* to_string(SensMethod m);
SensMethod parse_method(std::string_view s);

struct SensitivityRequest {
  std::string observable;
  std::string parameter;
  double T = 1.0;
  SensMethod method = SensMethod::PdmpDecomposition;
  std::size_t paths = 1000;
  double h = 1e-2;
  bool relative_h = true;  // step = h*|theta| (h itself when theta == 0)
  bool central = false;
  bool independent = false;  // CFD without coupling (variance comparison only)
  std::size_t aux_times = 10;
  std::size_t aux_pairs = 1;
  std::size_t max_aux_runs = 200'000'000;
  StepConfig cfg;
  std::uint64_t seed = kDefaultSeed;
};

struct EstimatePart {
  double value = 0.0;
  double std_error = 0.0;
};

struct SensitivityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::optional<EstimatePart> continuous;
  std::optional<EstimatePart> discrete;
  double wall_time_s = 0.0;
  std::string method;
  double step = 0.0;          // absolute perturbation actually used (CFD)
  std::vector<double> tau;    // decoupling times of the coupled pairs (CFD)
  std::vector<double> samples;  // per-path totals
};

/// Absolute perturbation for parameter value theta.
double perturbation(double theta, double h, bool relative);

SensitivityEstimate sens_continuous(const ReducedPDMP& m,
                                    const SensitivityRequest& req);
SensitivityEstimate sens_discrete_ipa(const ReducedPDMP& m,
                                      const SensitivityRequest& req);
/// One augmented campaign; value = continuous.value + discrete.value.
SensitivityEstimate sens_pdmp_total(const ReducedPDMP& m,
                                    const SensitivityRequest& req);
SensitivityEstimate cfd_pdmp(const ReducedPDMP& m, const SensitivityRequest& req);

/// Finite difference over theta0 of E f under the tilted discrete dynamics,
/// both components split-coupled. Estimates the discrete part only.
SensitivityEstimate tilted_fd(const ReducedPDMP& m, const SensitivityRequest& req);

/// Engine whose discrete rates follow the tilt around the nominal parameter
/// vector `params` (theta = params[theta]) towards theta0.
PdmpEngine build_tilted_model(const ReducedPDMP& m, std::vector<double> params,
                              std::size_t theta, double theta0);

/// CTMC-side options: scaling (for Lambda_N0 and the observation clock) and
/// an optional system size N replacing the declared N0.
struct CtmcScale {
  const ScalingSpec* scaling = nullptr;
  std::optional<double> N;
};

SensitivityEstimate cfd_ctmc(const ReactionNetwork& n, const SensitivityRequest& req,
                             const CtmcScale& scale = {});
SensitivityEstimate ipa_ctmc(const ReactionNetwork& n, const SensitivityRequest& req,
                             const CtmcScale& scale = {});

}  // namespace hybridsens
