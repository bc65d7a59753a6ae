#include "hybridsens/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "hybridsens/rates.hpp"

namespace hybridsens {

TruncatedStateSpace::TruncatedStateSpace(std::vector<long> lower,
                                         std::vector<long> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size())
    throw std::invalid_argument("state-space bounds differ in length");
  stride_.assign(lower_.size(), 1);
  for (std::size_t i = lower_.size(); i-- > 0;) {
    if (upper_[i] < lower_[i]) throw std::invalid_argument("empty state-space box");
    stride_[i] = size_;
    size_ *= static_cast<std::size_t>(upper_[i] - lower_[i] + 1);
  }
}

TruncatedStateSpace TruncatedStateSpace::box(std::vector<long> upper) {
  std::vector<long> lower(upper.size(), 0);
  return TruncatedStateSpace(std::move(lower), std::move(upper));
}

bool TruncatedStateSpace::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < lower_.size(); ++i)
    if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
  return true;
}

std::size_t TruncatedStateSpace::index(std::span<const double> x) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < lower_.size(); ++i)
    idx += static_cast<std::size_t>(std::lround(x[i]) - lower_[i]) * stride_[i];
  return idx;
}

std::vector<double> TruncatedStateSpace::state(std::size_t idx) const {
  std::vector<double> x(lower_.size());
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    x[i] = static_cast<double>(lower_[i] + static_cast<long>(idx / stride_[i]));
    idx %= stride_[i];
  }
  return x;
}

CmeSolution cme_solve(const ReactionNetwork& n, std::span<const double> params,
                      const TruncatedStateSpace& space, double T,
                      const CmeOptions& opt) {
  if (space.size() > opt.cap)
    throw std::runtime_error("truncated state space has " +
                             std::to_string(space.size()) +
                             " states, above the cap of " + std::to_string(opt.cap));
  if (space.dimension() != n.num_species())
    throw std::invalid_argument("state-space dimension differs from species count");
  const auto x0 = n.initial_state();
  if (!space.contains(x0)) throw std::invalid_argument("initial state outside the box");

  struct Edge {
    std::size_t from, to;
    double rate;
  };
  RateTable rates(n, {params.begin(), params.end()});
  std::vector<Edge> edges;
  std::vector<double> exit(space.size(), 0.0);
  std::vector<bool> boundary(space.size(), false);
  for (std::size_t s = 0; s < space.size(); ++s) {
    auto x = space.state(s);
    for (std::size_t k = 0; k < n.num_reactions(); ++k) {
      const double a = rates.rate(k, x);
      if (a <= 0.0) continue;
      auto y = x;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += n.zeta(k)[i];
      if (!space.contains(y)) {
        boundary[s] = true;
        continue;
      }
      edges.push_back({s, space.index(y), a});
      exit[s] += a;
    }
  }

  auto rhs = [&](const std::vector<double>& p, std::vector<double>& out) {
    for (std::size_t s = 0; s < p.size(); ++s) out[s] = -exit[s] * p[s];
    for (const Edge& e : edges) out[e.to] += e.rate * p[e.from];
  };

  CmeSolution sol;
  sol.p.assign(space.size(), 0.0);
  sol.p[space.index(x0)] = 1.0;
  const double dt = opt.dt > 0.0 ? opt.dt : T / 1e4;
  const std::size_t steps = T > 0.0 ? static_cast<std::size_t>(std::ceil(T / dt - 1e-9)) : 0;
  std::vector<double> k1(space.size()), k2(space.size()), k3(space.size()),
      k4(space.size()), tmp(space.size());
  for (std::size_t step = 0; step < steps; ++step) {
    const double h = step + 1 == steps ? T - dt * static_cast<double>(step) : dt;
    auto& p = sol.p;
    rhs(p, k1);
    for (std::size_t s = 0; s < p.size(); ++s) tmp[s] = p[s] + 0.5 * h * k1[s];
    rhs(tmp, k2);
    for (std::size_t s = 0; s < p.size(); ++s) tmp[s] = p[s] + 0.5 * h * k2[s];
    rhs(tmp, k3);
    for (std::size_t s = 0; s < p.size(); ++s) tmp[s] = p[s] + h * k3[s];
    rhs(tmp, k4);
    for (std::size_t s = 0; s < p.size(); ++s) {
      p[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
      if (p[s] < -1e-9)
        throw std::runtime_error("CME integration produced a negative probability");
    }
  }
  for (std::size_t s = 0; s < space.size(); ++s)
    if (boundary[s]) sol.tail_estimate += std::max(sol.p[s], 0.0);
  return sol;
}

double cme_expectation(const ReactionNetwork& n, std::span<const double> params,
                       const TruncatedStateSpace& space, const CmeSolution& sol,
                       const std::string& observable) {
  const Expression& f = n.observable(observable);
  CompiledExpr code(f, params);
  double e = 0.0;
  for (std::size_t s = 0; s < space.size(); ++s)
    if (sol.p[s] != 0.0) e += sol.p[s] * code.eval(space.state(s), params);
  return e;
}

double cme_sensitivity_fd(const ReactionNetwork& n, const std::string& theta,
                          const std::string& observable,
                          const TruncatedStateSpace& space, double T, double h,
                          const CmeOptions& opt) {
  const std::size_t idx = n.param_index(theta);
  auto hi = n.param_values(), lo = n.param_values();
  hi[idx] += h;
  lo[idx] -= h;
  const double fh = cme_expectation(n, hi, space, cme_solve(n, hi, space, T, opt), observable);
  const double fl = cme_expectation(n, lo, space, cme_solve(n, lo, space, T, opt), observable);
  return (fh - fl) / (2.0 * h);
}

std::pair<double, double> birth_death_reference(double theta_birth,
                                                double rate_death, double t) {
  if (!(rate_death > 0.0)) throw std::invalid_argument("death rate must be positive");
  const double frac = 1.0 - std::exp(-rate_death * t);
  const double mean = theta_birth / rate_death * frac;
  return {mean, frac / rate_death};
}

}  // namespace hybridsens
