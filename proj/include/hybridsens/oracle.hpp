#pragma once

#include <span>
#include <utility>
#include <vector>

#include "hybridsens/model.hpp"

namespace hybridsens {

/// Box of states lower_i <= x_i <= upper_i, enumerated lexicographically with
/// the first species most significant.
class TruncatedStateSpace {
 public:
  TruncatedStateSpace(std::vector<long> lower, std::vector<long> upper);
  static TruncatedStateSpace box(std::vector<long> upper);

  std::size_t size() const { return size_; }
  std::size_t dimension() const { return lower_.size(); }
  bool contains(std::span<const double> x) const;
  std::size_t index(std::span<const double> x) const;
  std::vector<double> state(std::size_t idx) const;

 private:
  std::vector<long> lower_, upper_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 1;
};

struct CmeOptions {
  double dt = 0.0;  // 0 selects T / 1e4
  std::size_t cap = 200'000;
};

struct CmeSolution {
  std::vector<double> p;
  /// Reflecting truncation keeps the mass on the box, so this is 0.
  double leakage = 0.0;
  /// Heuristic for the truncation bias: mass on states from which some
  /// reaction would leave the box.
  double tail_estimate = 0.0;
};

/// RK4 on the truncated master equation. Reactions leaving the box are
/// suppressed.
CmeSolution cme_solve(const ReactionNetwork& n, std::span<const double> params,
                      const TruncatedStateSpace& space, double T,
                      const CmeOptions& opt = {});

double cme_expectation(const ReactionNetwork& n, std::span<const double> params,
                       const TruncatedStateSpace& space, const CmeSolution& sol,
                       const std::string& observable);

/// Central difference (E_{theta+h} f - E_{theta-h} f) / 2h.
double cme_sensitivity_fd(const ReactionNetwork& n, const std::string& theta,
                          const std::string& observable,
                          const TruncatedStateSpace& space, double T, double h,
                          const CmeOptions& opt = {});

/// Immigration-death closed form: (mean, d mean / d theta_birth).
std::pair<double, double> birth_death_reference(double theta_birth,
                                                double rate_death, double t);

}  // namespace hybridsens
