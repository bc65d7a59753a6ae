#include "hybridsens/sensitivity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "hybridsens/ctmc.hpp"
#include "hybridsens/stats.hpp"

namespace hybridsens {

const char* to_string(SensMethod m) {
  switch (m) {
    case SensMethod::PdmpDecomposition: return "pdmp-decomposition";
    case SensMethod::CfdPdmp: return "cfd-pdmp";
    case SensMethod::CfdCtmc: return "cfd-ctmc";
    case SensMethod::IpaCtmc: return "ipa-ctmc";
    case SensMethod::TiltedFd: return "tilted-fd";
  }
  return "?";
}

SensMethod parse_method(std::string_view s) {
  for (SensMethod m : {SensMethod::PdmpDecomposition, SensMethod::CfdPdmp,
                       SensMethod::CfdCtmc, SensMethod::IpaCtmc, SensMethod::TiltedFd})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

double perturbation(double theta, double h, bool relative) {
  if (!relative || theta == 0.0) return h;
  return h * std::abs(theta);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_request(const SensitivityRequest& req) {
  if (req.paths < 2) throw std::invalid_argument("need at least 2 paths");
  if (req.aux_times < 1) throw std::invalid_argument("aux_times must be >= 1");
  if (req.aux_pairs < 1) throw std::invalid_argument("aux_pairs must be >= 1");
  if (!(req.T > 0.0)) throw std::invalid_argument("T must be positive");
}

// Observable compiled over the full species vector.
struct Observable {
  Observable(const ReactionNetwork& n, const std::string& name,
             std::span<const double> params)
      : expr(&n.observable(name)), code(*expr, params), params(params.begin(), params.end()) {}
  double operator()(std::span<const double> z) const { return code.eval(z, params); }
  const Expression* expr;
  CompiledExpr code;
  std::vector<double> params;
};

EstimatePart part_of(std::span<const double> v) {
  auto s = SummaryStats::of(v);
  return {s.mean, s.std_error};
}

struct PdmpCampaign {
  const ReducedPDMP& m;
  const SensitivityRequest& req;
  std::size_t theta;
  std::vector<double> params;
  double dt;
  std::size_t N;

  PdmpCampaign(const ReducedPDMP& m_, const SensitivityRequest& r)
      : m(m_), req(r), theta(m_.net.param_index(r.parameter)),
        params(m_.net.param_values()), dt(r.cfg.step(r.T)), N(step_count(r.T, dt)) {
    check_request(r);
    m.net.observable(r.observable);
  }
};

// Per-path (continuous, discrete) samples of the decomposition.
void decomposition_samples(const PdmpCampaign& c, bool want_continuous,
                           bool want_discrete, std::vector<double>& cont,
                           std::vector<double>& disc) {
  const ReducedPDMP& m = c.m;
  const auto& req = c.req;
  const std::size_t J = m.discrete_reactions.size();
  const std::size_t M = req.aux_times;
  if (want_discrete && req.paths * J * M * req.aux_pairs > req.max_aux_runs)
    throw std::runtime_error("auxiliary simulation budget exceeded");
  PdmpEngine engine(m, c.params, c.theta);
  Observable f(m.net, req.observable, c.params);
  cont.assign(req.paths, 0.0);
  disc.assign(req.paths, 0.0);

  parallel_for(req.paths, [&](std::size_t p) {
    RngStream rng(req.seed, p);
    // Evaluation times come first so the stream layout does not depend on
    // the path.
    std::vector<std::pair<std::size_t, std::size_t>> evals;  // (step, j)
    if (want_discrete && c.N > 0)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t q = 0; q < M; ++q) {
          const double t = rng.uniform() * req.T;
          std::size_t s = static_cast<std::size_t>(t / c.dt);
          evals.emplace_back(std::min(s, c.N - 1), j);
        }
    PdmpRunOptions opt;
    opt.augmented = true;
    for (auto& e : evals) opt.capture_steps.push_back(e.first);
    std::sort(opt.capture_steps.begin(), opt.capture_steps.end());
    opt.capture_steps.erase(
        std::unique(opt.capture_steps.begin(), opt.capture_steps.end()),
        opt.capture_steps.end());
    PdmpResult r = engine.run(engine.initial_state(), 0, req.T, c.dt, rng, opt,
                              req.cfg.max_events);

    if (want_continuous && !m.continuous_species.empty()) {
      auto g = m.net.observable_gradient(req.observable, r.final.z, c.params,
                                         m.continuous_species);
      double v = 0.0;
      for (std::size_t l = 0; l < g.size(); ++l) v += g[l] * r.final.y[l];
      cont[p] = v;
    }
    if (!want_discrete) return;

    double total = 0.0;
    CoupledPdmp pair(engine, engine);
    for (std::size_t e = 0; e < evals.size(); ++e) {
      const auto [step, j] = evals[e];
      const std::size_t q = e % M;
      auto cap = std::lower_bound(
          r.captures.begin(), r.captures.end(), step,
          [](const PdmpCapture& a, std::size_t s) { return a.step < s; });
      const double D = cap->D[j];
      if (D == 0.0) continue;
      std::vector<double> shifted = cap->z;
      bool valid = true;
      const std::size_t k = m.discrete_reactions[j];
      for (std::size_t i : m.discrete_species) {
        shifted[i] += m.net.zeta(k)[i];
        valid &= shifted[i] >= 0.0;
      }
      if (!valid) continue;
      double acc = 0.0;
      for (std::size_t a = 0; a < req.aux_pairs; ++a) {
        RngStream aux = RngStream::derive(req.seed, {p, j, q, a});
        auto out = pair.run(shifted, cap->z, step, req.T, c.dt, aux,
                            req.cfg.max_events);
        acc += f(out.a) - f(out.b);
      }
      total += D * acc / static_cast<double>(req.aux_pairs);
    }
    disc[p] = total * req.T / static_cast<double>(M);
  });
}

SensitivityEstimate finish(std::vector<double> samples, const char* method,
                           Clock::time_point t0) {
  SensitivityEstimate est;
  auto s = SummaryStats::of(samples);
  est.value = s.mean;
  est.std_error = s.std_error;
  est.n = samples.size();
  est.method = method;
  est.samples = std::move(samples);
  est.wall_time_s = seconds_since(t0);
  return est;
}

}  // namespace

SensitivityEstimate sens_continuous(const ReducedPDMP& m,
                                    const SensitivityRequest& req) {
  auto t0 = Clock::now();
  PdmpCampaign c(m, req);
  std::vector<double> cont, disc;
  decomposition_samples(c, true, false, cont, disc);
  auto est = finish(cont, "pdmp-continuous", t0);
  est.continuous = EstimatePart{est.value, est.std_error};
  return est;
}

SensitivityEstimate sens_discrete_ipa(const ReducedPDMP& m,
                                      const SensitivityRequest& req) {
  auto t0 = Clock::now();
  PdmpCampaign c(m, req);
  std::vector<double> cont, disc;
  decomposition_samples(c, false, true, cont, disc);
  auto est = finish(disc, "pdmp-discrete", t0);
  est.discrete = EstimatePart{est.value, est.std_error};
  return est;
}

SensitivityEstimate sens_pdmp_total(const ReducedPDMP& m,
                                    const SensitivityRequest& req) {
  auto t0 = Clock::now();
  PdmpCampaign c(m, req);
  std::vector<double> cont, disc;
  decomposition_samples(c, true, true, cont, disc);
  std::vector<double> total(cont.size());
  for (std::size_t i = 0; i < total.size(); ++i) total[i] = cont[i] + disc[i];
  auto est = finish(std::move(total), to_string(SensMethod::PdmpDecomposition), t0);
  est.continuous = part_of(cont);
  est.discrete = part_of(disc);
  est.value = est.continuous->value + est.discrete->value;
  return est;
}

namespace {

SensitivityEstimate coupled_fd(const ReducedPDMP& m, const SensitivityRequest& req,
                               bool tilted, const char* method) {
  auto t0 = Clock::now();
  PdmpCampaign c(m, req);
  const double theta = c.params[c.theta];
  const double step = perturbation(theta, req.h, req.relative_h);
  const double lo = req.central ? theta - step : theta;
  const double hi = theta + step;
  const double width = hi - lo;
  if (!(width > 0.0)) throw std::invalid_argument("perturbation h must be positive");
  std::optional<PdmpEngine> ea, eb;
  if (tilted) {
    ea.emplace(build_tilted_model(m, c.params, c.theta, lo));
    eb.emplace(build_tilted_model(m, c.params, c.theta, hi));
  } else {
    auto pa = c.params, pb = c.params;
    pa[c.theta] = lo;
    pb[c.theta] = hi;
    ea.emplace(m, pa);
    eb.emplace(m, pb);
  }
  Observable fa(m.net, req.observable, ea->params());
  Observable fb(m.net, req.observable, eb->params());
  CoupledPdmp pair(*ea, *eb);
  const auto z0 = m.net.initial_state();
  std::vector<double> samples(req.paths), tau(req.paths);
  parallel_for(req.paths, [&](std::size_t p) {
    if (req.independent) {
      RngStream ra(req.seed, 2 * p), rb(req.seed, 2 * p + 1);
      PdmpRunOptions opt;
      auto a = ea->run(ea->initial_state(), 0, req.T, c.dt, ra, opt, req.cfg.max_events);
      auto b = eb->run(eb->initial_state(), 0, req.T, c.dt, rb, opt, req.cfg.max_events);
      samples[p] = (fb(b.final.z) - fa(a.final.z)) / width;
      tau[p] = 0.0;
      return;
    }
    RngStream rng(req.seed, p);
    auto out = pair.run(z0, z0, 0, req.T, c.dt, rng, req.cfg.max_events);
    samples[p] = (fb(out.b) - fa(out.a)) / width;
    tau[p] = out.tau;
  });
  auto est = finish(std::move(samples), method, t0);
  est.step = step;
  est.tau = std::move(tau);
  return est;
}

}  // namespace

SensitivityEstimate cfd_pdmp(const ReducedPDMP& m, const SensitivityRequest& req) {
  return coupled_fd(m, req, false, to_string(SensMethod::CfdPdmp));
}

SensitivityEstimate tilted_fd(const ReducedPDMP& m, const SensitivityRequest& req) {
  auto est = coupled_fd(m, req, true, to_string(SensMethod::TiltedFd));
  est.discrete = EstimatePart{est.value, est.std_error};
  return est;
}

PdmpEngine build_tilted_model(const ReducedPDMP& m, std::vector<double> params,
                              std::size_t theta, double theta0) {
  return PdmpEngine(m, std::move(params), theta, TiltSpec{theta0});
}

namespace {

struct CtmcSetup {
  std::vector<double> params;
  std::vector<double> x0;
  std::vector<double> factors;  // Lambda
  double horizon = 0.0;
  std::size_t theta = 0;
};

CtmcSetup ctmc_setup(const ReactionNetwork& n, const SensitivityRequest& req,
                     const CtmcScale& scale) {
  check_request(req);
  n.observable(req.observable);
  CtmcSetup s;
  s.params = n.param_values();
  s.theta = n.param_index(req.parameter);
  s.x0 = n.initial_state();
  s.factors.assign(n.num_species(), 1.0);
  s.horizon = req.T;
  if (scale.scaling) {
    const ScalingSpec& sp = *scale.scaling;
    const double N = scale.N.value_or(sp.N0);
    if (auto idx = n.find_param("N0")) s.params[*idx] = N;
    s.x0 = scaled_initial_counts(n, sp, N);
    s.factors = scale_factors(sp, N);
    const Rational g = timescale_report(n, sp).gamma;
    s.horizon = req.T * std::pow(N, to_double(g));
  }
  return s;
}

std::vector<double> scaled(std::span<const double> x, const std::vector<double>& f) {
  std::vector<double> z(x.begin(), x.end());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] *= f[i];
  return z;
}

}  // namespace

SensitivityEstimate cfd_ctmc(const ReactionNetwork& n, const SensitivityRequest& req,
                             const CtmcScale& scale) {
  auto t0 = Clock::now();
  CtmcSetup s = ctmc_setup(n, req, scale);
  const double theta = s.params[s.theta];
  const double step = perturbation(theta, req.h, req.relative_h);
  auto pa = s.params, pb = s.params;
  pa[s.theta] = req.central ? theta - step : theta;
  pb[s.theta] = theta + step;
  const double width = pb[s.theta] - pa[s.theta];
  if (!(width > 0.0)) throw std::invalid_argument("perturbation h must be positive");
  CtmcSimulator sa(n, pa), sb(n, pb);
  CoupledCtmc pair(sa, sb);
  Observable fa(n, req.observable, pa), fb(n, req.observable, pb);
  std::vector<double> samples(req.paths), tau(req.paths);
  parallel_for(req.paths, [&](std::size_t p) {
    RngStream rng(req.seed, p);
    if (req.independent) {
      RngStream rb(req.seed, p + (1ULL << 40));
      auto a = sa.ssa_direct(s.x0, s.horizon, rng);
      auto b = sb.ssa_direct(s.x0, s.horizon, rb);
      samples[p] = (fb(scaled(b.final_state, s.factors)) -
                    fa(scaled(a.final_state, s.factors))) / width;
      tau[p] = 0.0;
      return;
    }
    auto out = pair.run(s.x0, s.x0, 0.0, s.horizon, rng, req.cfg.max_events);
    samples[p] = (fb(scaled(out.b, s.factors)) - fa(scaled(out.a, s.factors))) / width;
    tau[p] = out.tau;
  });
  auto est = finish(std::move(samples), to_string(SensMethod::CfdCtmc), t0);
  est.step = step;
  est.tau = std::move(tau);
  return est;
}

SensitivityEstimate ipa_ctmc(const ReactionNetwork& n, const SensitivityRequest& req,
                             const CtmcScale& scale) {
  auto t0 = Clock::now();
  CtmcSetup s = ctmc_setup(n, req, scale);
  const std::size_t K = n.num_reactions();
  const std::size_t M = req.aux_times;
  if (req.paths * K * M * req.aux_pairs > req.max_aux_runs)
    throw std::runtime_error("auxiliary simulation budget exceeded");
  CtmcSimulator sim(n, s.params);
  CoupledCtmc pair(sim, sim);
  RateTable grads(n, s.params, s.theta);
  const std::array<SymbolRef, 1> dir{SymbolRef::param(s.theta)};
  Observable f(n, req.observable, s.params);
  std::vector<double> samples(req.paths);
  parallel_for(req.paths, [&](std::size_t p) {
    RngStream rng(req.seed, p);
    std::vector<std::pair<double, std::size_t>> evals;  // (time, k)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t q = 0; q < M; ++q)
        evals.emplace_back(rng.uniform() * s.horizon, k);
    CtmcOptions opt;
    std::vector<std::size_t> order(evals.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return evals[a].first < evals[b].first;
    });
    for (std::size_t i : order) opt.grid.push_back(evals[i].first);
    auto main = sim.ssa_direct(s.x0, s.horizon, rng, opt);
    double total = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const std::size_t e = order[r];
      const auto [t, k] = evals[e];
      const auto& x = main.grid_states[r];
      double d = 0.0;
      grads.rate_grad(k, x, dir, std::span(&d, 1));
      if (d == 0.0) continue;
      std::vector<double> shifted = x;
      bool valid = true;
      for (std::size_t i = 0; i < shifted.size(); ++i) {
        shifted[i] += n.zeta(k)[i];
        valid &= shifted[i] >= 0.0;
      }
      if (!valid) continue;
      double acc = 0.0;
      for (std::size_t a = 0; a < req.aux_pairs; ++a) {
        RngStream aux = RngStream::derive(req.seed, {p, k, e % M, a});
        auto out = pair.run(shifted, x, t, s.horizon, aux, req.cfg.max_events);
        acc += f(scaled(out.a, s.factors)) - f(scaled(out.b, s.factors));
      }
      total += d * acc / static_cast<double>(req.aux_pairs);
    }
    samples[p] = total * s.horizon / static_cast<double>(M);
  });
  return finish(std::move(samples), to_string(SensMethod::IpaCtmc), t0);
}

}  // namespace hybridsens
