#include "hybridsens/ctmc.hpp"

#include <algorithm>
#include <cmath>

namespace hybridsens {

namespace {

struct GridRecorder {
  const std::vector<double>& grid;
  std::vector<std::vector<double>>& out;
  std::size_t next = 0;

  // State x holds on [.., t_event); record every grid point before t_event.
  void advance(double t_event, const std::vector<double>& x) {
    while (next < grid.size() && grid[next] < t_event) {
      out.push_back(x);
      ++next;
    }
  }
  void finish(const std::vector<double>& x) { advance(INFINITY, x); }
};

void apply(std::vector<double>& x, const std::vector<std::pair<std::size_t, int>>& mv) {
  for (auto [i, d] : mv) x[i] += d;
}

}  // namespace

CtmcSimulator::CtmcSimulator(const ReactionNetwork& n, std::vector<double> params)
    : net_(&n), rates_(n, std::move(params)) {
  for (std::size_t k = 0; k < n.num_reactions(); ++k) {
    std::vector<std::pair<std::size_t, int>> mv;
    for (std::size_t i = 0; i < n.num_species(); ++i)
      if (n.zeta(k)[i] != 0) mv.emplace_back(i, n.zeta(k)[i]);
    moves_.push_back(std::move(mv));
  }
}

CtmcResult CtmcSimulator::ssa_direct(std::span<const double> x0, double T,
                                     UniformSource& rng,
                                     const CtmcOptions& opt) const {
  const std::size_t K = rates_.size();
  CtmcResult res;
  std::vector<double> x(x0.begin(), x0.end());
  if (opt.record_events) {
    res.path.initial = x;
    res.path.T = T;
  }
  GridRecorder rec{opt.grid, res.grid_states};
  std::vector<double> a(K);
  for (std::size_t k = 0; k < K; ++k) a[k] = rates_.rate(k, x);
  double t = 0.0;
  for (;;) {
    double a0 = 0.0;
    for (double v : a) a0 += v;
    if (!(a0 > 0.0)) {
      res.absorbed = true;
      break;
    }
    const double tau = rng.exponential() / a0;
    if (t + tau > T) break;
    const double target = rng.uniform() * a0;
    std::size_t k = 0;
    double acc = a[0];
    while (acc <= target && k + 1 < K) acc += a[++k];
    while (a[k] == 0.0 && k > 0) --k;  // rounding at the top end
    if (res.events == opt.max_events) {
      res.final_state = x;
      rec.finish(x);
      throw TruncatedPathError("event budget of " + std::to_string(opt.max_events) +
                                   " exhausted at t=" + std::to_string(t),
                               std::move(res));
    }
    t += tau;
    rec.advance(t, x);
    apply(x, moves_[k]);
    ++res.events;
    if (opt.record_events) {
      res.path.times.push_back(t);
      res.path.reactions.push_back(static_cast<std::uint32_t>(k));
      res.path.states.push_back(x);
    }
    for (std::size_t j : rates_.affected_by(k)) a[j] = rates_.rate(j, x);
  }
  rec.finish(x);
  res.final_state = std::move(x);
  return res;
}

CtmcResult CtmcSimulator::nrm(std::span<const double> x0, double T,
                              UniformSource& rng, const CtmcOptions& opt) const {
  const std::size_t K = rates_.size();
  CtmcResult res;
  std::vector<double> x(x0.begin(), x0.end());
  if (opt.record_events) {
    res.path.initial = x;
    res.path.T = T;
  }
  GridRecorder rec{opt.grid, res.grid_states};
  std::vector<double> a(K), Tk(K, 0.0), Pk(K);
  for (std::size_t k = 0; k < K; ++k) {
    a[k] = rates_.rate(k, x);
    Pk[k] = rng.exponential();
  }
  double t = 0.0;
  for (;;) {
    std::size_t k = K;
    double best = INFINITY;
    for (std::size_t j = 0; j < K; ++j) {
      if (!(a[j] > 0.0)) continue;
      const double d = (Pk[j] - Tk[j]) / a[j];
      if (d < best) {
        best = d;
        k = j;
      }
    }
    if (k == K) {
      res.absorbed = true;
      break;
    }
    if (t + best > T) break;
    if (res.events == opt.max_events) {
      res.final_state = x;
      rec.finish(x);
      throw TruncatedPathError("event budget of " + std::to_string(opt.max_events) +
                                   " exhausted at t=" + std::to_string(t),
                               std::move(res));
    }
    t += best;
    for (std::size_t j = 0; j < K; ++j) Tk[j] += a[j] * best;
    Tk[k] = Pk[k];
    rec.advance(t, x);
    apply(x, moves_[k]);
    ++res.events;
    if (opt.record_events) {
      res.path.times.push_back(t);
      res.path.reactions.push_back(static_cast<std::uint32_t>(k));
      res.path.states.push_back(x);
    }
    Pk[k] += rng.exponential();
    for (std::size_t j : rates_.affected_by(k)) a[j] = rates_.rate(j, x);
  }
  rec.finish(x);
  res.final_state = std::move(x);
  return res;
}

CtmcResult ssa_direct(const ReactionNetwork& n, std::span<const double> params,
                      std::span<const double> x0, double T, UniformSource& rng,
                      const CtmcOptions& opt) {
  return CtmcSimulator(n, {params.begin(), params.end()}).ssa_direct(x0, T, rng, opt);
}

CtmcResult nrm_time_change(const ReactionNetwork& n,
                           std::span<const double> params,
                           std::span<const double> x0, double T,
                           UniformSource& rng, const CtmcOptions& opt) {
  return CtmcSimulator(n, {params.begin(), params.end()}).nrm(x0, T, rng, opt);
}

CoupledCtmc::CoupledCtmc(const CtmcSimulator& a, const CtmcSimulator& b)
    : a_(&a), b_(&b) {}

CoupledCtmcResult CoupledCtmc::run(std::span<const double> xa0,
                                   std::span<const double> xb0, double t0,
                                   double T, UniformSource& rng,
                                   std::size_t max_events) const {
  const std::size_t K = a_->rates_.size();
  CoupledCtmcResult res;
  std::vector<double> xa(xa0.begin(), xa0.end()), xb(xb0.begin(), xb0.end());
  std::vector<double> ra(K), rb(K), c(3 * K), Tc(3 * K, 0.0), Pc(3 * K);
  auto clocks = [&](std::size_t k) {
    const double m = std::min(ra[k], rb[k]);
    c[3 * k] = m;
    c[3 * k + 1] = ra[k] - m;
    c[3 * k + 2] = rb[k] - m;
  };
  for (std::size_t k = 0; k < K; ++k) {
    ra[k] = a_->rates_.rate(k, xa);
    rb[k] = b_->rates_.rate(k, xb);
    clocks(k);
  }
  for (auto& p : Pc) p = rng.exponential();
  bool split = xa != xb;
  if (split) res.tau = t0;
  double t = t0;
  for (;;) {
    std::size_t q = c.size();
    double best = INFINITY;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (!(c[j] > 0.0)) continue;
      const double d = (Pc[j] - Tc[j]) / c[j];
      if (d < best) {
        best = d;
        q = j;
      }
    }
    if (q == c.size() || t + best > T) break;
    if (res.events == max_events)
      throw std::runtime_error("coupled CTMC: event budget exhausted at t=" +
                               std::to_string(t));
    t += best;
    for (std::size_t j = 0; j < c.size(); ++j) Tc[j] += c[j] * best;
    Tc[q] = Pc[q];
    Pc[q] += rng.exponential();
    const std::size_t k = q / 3, which = q % 3;
    if (which != 2) {
      apply(xa, a_->moves_[k]);
      for (std::size_t j : a_->rates_.affected_by(k)) ra[j] = a_->rates_.rate(j, xa);
    }
    if (which != 1) {
      apply(xb, b_->moves_[k]);
      for (std::size_t j : b_->rates_.affected_by(k)) rb[j] = b_->rates_.rate(j, xb);
    }
    for (std::size_t j : a_->rates_.affected_by(k)) clocks(j);
    if (which != 0) clocks(k);
    ++res.events;
    if (!split && xa != xb) {
      split = true;
      res.tau = t;
    }
  }
  res.a = std::move(xa);
  res.b = std::move(xb);
  return res;
}

std::vector<double> scale_factors(const ScalingSpec& s, double N) {
  std::vector<double> f;
  for (const Rational& a : s.alpha) f.push_back(std::pow(N, -to_double(a)));
  return f;
}

std::vector<double> scaled_initial_counts(const ReactionNetwork& n,
                                          const ScalingSpec& s, double N) {
  std::vector<double> x = n.initial_state();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = to_double(s.alpha[i]);
    if (a == 0.0) continue;
    x[i] = std::round(x[i] * std::pow(N / s.N0, a));
  }
  return x;
}

std::vector<std::vector<double>> simulate_scaled(const ReactionNetwork& n,
                                                 const ScalingSpec& s, double N,
                                                 const Rational& gamma,
                                                 std::span<const double> params,
                                                 double T, UniformSource& rng,
                                                 std::vector<double> grid) {
  std::vector<double> p(params.begin(), params.end());
  if (auto idx = n.find_param("N0")) p[*idx] = N;
  const double clock = std::pow(N, to_double(gamma));
  if (grid.empty()) grid.push_back(T);
  CtmcOptions opt;
  for (double g : grid) opt.grid.push_back(g * clock);
  CtmcSimulator sim(n, p);
  auto res = sim.ssa_direct(scaled_initial_counts(n, s, N), T * clock, rng, opt);
  const auto f = scale_factors(s, N);
  for (auto& st : res.grid_states)
    for (std::size_t i = 0; i < st.size(); ++i) st[i] *= f[i];
  return res.grid_states;
}

}  // namespace hybridsens
