#include "hybridsens/pdmp.hpp"

#include <algorithm>
#include <cmath>

namespace hybridsens {

std::size_t step_count(double T, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (T <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
}

namespace {

double step_time(std::size_t n, std::size_t N, double T, double dt) {
  return n >= N ? T : static_cast<double>(n) * dt;
}

}  // namespace

struct PdmpEngine::Component {
  PdmpPathState s;
  std::vector<double> lc, gc, ld, dx, dy, scratch;
  Eigen::MatrixXd M, tmp;
  Eigen::VectorXd quad, b;
  bool dirty = true;
  bool quad_on = false;
};

PdmpEngine::PdmpEngine(const ReducedPDMP& m, std::vector<double> params,
                       std::optional<std::size_t> theta,
                       std::optional<TiltSpec> tilt)
    : m_(&m),
      flow_(m.net, params, theta),
      theta_(theta),
      tilt_(tilt),
      cont_(m.continuous_species),
      rc_(m.continuous_reactions),
      rd_(m.discrete_reactions) {
  if (tilt_) {
    if (!theta_) throw std::invalid_argument("tilted engine needs a parameter");
    std::vector<double> p0 = params;
    p0[*theta_] = tilt_->theta0;
    jump_.emplace(m.net, std::move(p0));
  }
  local_of_.assign(m.net.num_species(), SIZE_MAX);
  for (std::size_t l = 0; l < cont_.size(); ++l) local_of_[cont_[l]] = l;
  auto reads_continuous = [&](std::size_t k) {
    for (std::size_t i : flow_.reads(k))
      if (local_of_[i] != SIZE_MAX) return true;
    return false;
  };
  for (std::size_t k : rc_) {
    rc_static_.push_back(!reads_continuous(k));
    std::vector<std::pair<std::size_t, double>> z;
    for (std::size_t i = 0; i < m.net.num_species(); ++i)
      if (m.net.zeta(k)[i] != 0) {
        if (local_of_[i] == SIZE_MAX)
          throw DerivationError("continuous reaction '" +
                                m.net.reactions()[k].name +
                                "' changes a discrete species");
        z.emplace_back(local_of_[i], m.net.zeta(k)[i]);
      }
    rc_zeta_.push_back(std::move(z));
  }
  for (std::size_t k : rd_) {
    rd_static_.push_back(!reads_continuous(k));
    std::vector<std::pair<std::size_t, int>> z;
    for (std::size_t i = 0; i < m.net.num_species(); ++i)
      if (m.net.zeta(k)[i] != 0) z.emplace_back(i, m.net.zeta(k)[i]);
    rd_zeta_.push_back(std::move(z));
  }
  dirs_.push_back(SymbolRef::param(theta_.value_or(0)));
  for (std::size_t i : cont_) dirs_.push_back(SymbolRef::species(i));
}

PdmpPathState PdmpEngine::initial_state() const {
  PdmpPathState s;
  s.z = m_->net.initial_state();
  return s;
}

double PdmpEngine::discrete_rate(std::size_t j, std::span<const double> z,
                                 std::span<const double> y) const {
  const std::size_t k = rd_[j];
  if (!tilt_) return flow_.rate(k, z);
  double v = jump_->rate(k, z);
  if (rd_static_[j]) return v;
  thread_local std::vector<double> g;
  g.resize(dirs_.size());
  flow_.rate_grad(k, z, dirs_, g);
  double dot = 0.0;
  for (std::size_t l = 0; l < cont_.size(); ++l) dot += g[1 + l] * y[l];
  v += (tilt_->theta0 - flow_.params()[*theta_]) * dot;
  return v > 0.0 ? v : 0.0;
}

double PdmpEngine::discrete_derivative(std::size_t j, std::span<const double> z,
                                       std::span<const double> y) const {
  if (!theta_) return 0.0;
  thread_local std::vector<double> g;
  g.resize(dirs_.size());
  flow_.rate_grad(rd_[j], z, dirs_, g);
  double d = g[0];
  for (std::size_t l = 0; l < cont_.size() && l < y.size(); ++l) d += g[1 + l] * y[l];
  return d;
}

void PdmpEngine::prepare(Component& c) const {
  const std::size_t m = cont_.size();
  c.lc.assign(rc_.size(), 0.0);
  c.gc.assign(rc_.size() * (1 + m), 0.0);
  c.ld.assign(rd_.size(), 0.0);
  c.dx.assign(m, 0.0);
  c.dy.assign(m, 0.0);
  c.dirty = true;
  if (c.s.Tk.empty()) c.s.Tk.assign(rd_.size(), 0.0);
}

void PdmpEngine::advance(Component& c, double h, bool augmented,
                         bool with_phi) const {
  const std::size_t m = cont_.size();
  const std::size_t w = 1 + m;
  auto& z = c.s.z;
  // Left-endpoint rates. Reactions that read only discrete species keep
  // their cached values until a firing marks the component dirty.
  for (std::size_t q = 0; q < rc_.size(); ++q) {
    if (rc_static_[q] && !c.dirty) continue;
    if (augmented)
      c.lc[q] = flow_.rate_grad(rc_[q], z, dirs_, std::span(c.gc).subspan(q * w, w));
    else
      c.lc[q] = flow_.rate(rc_[q], z);
  }
  for (std::size_t j = 0; j < rd_.size(); ++j) {
    if (rd_static_[j] && !c.dirty) continue;
    c.ld[j] = tilt_ ? discrete_rate(j, z, c.s.y) : flow_.rate(rd_[j], z);
  }
  c.dirty = false;
  if (m == 0) return;

  std::fill(c.dx.begin(), c.dx.end(), 0.0);
  for (std::size_t q = 0; q < rc_.size(); ++q)
    for (auto [l, zeta] : rc_zeta_[q]) c.dx[l] += zeta * c.lc[q];

  if (augmented) {
    std::fill(c.dy.begin(), c.dy.end(), 0.0);
    for (std::size_t q = 0; q < rc_.size(); ++q) {
      const double* g = &c.gc[q * w];
      double a = g[0];
      for (std::size_t l = 0; l < m; ++l) a += g[1 + l] * c.s.y[l];
      for (auto [l, zeta] : rc_zeta_[q]) c.dy[l] += zeta * a;
    }
    if (with_phi) {
      c.M.setZero();
      for (std::size_t q = 0; q < rc_.size(); ++q) {
        const double* g = &c.gc[q * w];
        for (auto [l, zeta] : rc_zeta_[q])
          for (std::size_t r = 0; r < m; ++r) c.M(l, r) += zeta * g[1 + r];
      }
      if (c.quad_on) {
        c.b.setZero();
        for (std::size_t q = 0; q < rc_.size(); ++q)
          for (auto [l, zeta] : rc_zeta_[q]) c.b(l) += zeta * c.gc[q * w];
        c.quad += h * c.s.Phi.partialPivLu().solve(c.b);
      }
      c.tmp.noalias() = c.M * c.s.Phi;
      c.s.Phi += h * c.tmp;
    }
    for (std::size_t l = 0; l < m; ++l) c.s.y[l] += h * c.dy[l];
  }
  for (std::size_t l = 0; l < m; ++l) {
    double& x = z[cont_[l]];
    x += h * c.dx[l];
    if (!std::isfinite(x))
      throw IntegrationFailure("continuous state of '" +
                                   m_->net.species()[cont_[l]].name +
                                   "' is not finite",
                               c.s.t);
  }
}

void PdmpEngine::fire(Component& c, std::size_t j) const {
  for (auto [i, d] : rd_zeta_[j]) c.s.z[i] += d;
  c.dirty = true;
}

PdmpResult PdmpEngine::run(PdmpPathState start, std::size_t first_step,
                           double T, double dt, UniformSource& rng,
                           const PdmpRunOptions& opt,
                           std::size_t max_events) const {
  const std::size_t m = cont_.size();
  const bool augmented = opt.augmented || opt.with_phi || tilt_.has_value();
  const bool with_phi = opt.with_phi || opt.phi_quadrature;
  if (augmented && !theta_)
    throw std::invalid_argument("augmented PDMP run needs a sensitivity parameter");
  Component c;
  c.s = std::move(start);
  prepare(c);
  if (c.s.Pk.empty())
    for (std::size_t j = 0; j < rd_.size(); ++j) c.s.Pk.push_back(rng.exponential());
  if (augmented && c.s.y.empty()) c.s.y.assign(m, 0.0);
  if (with_phi) {
    if (c.s.Phi.size() == 0) c.s.Phi = Eigen::MatrixXd::Identity(m, m);
    c.M.resize(m, m);
    c.tmp.resize(m, m);
    if (opt.phi_quadrature) {
      c.quad_on = true;
      c.quad = Eigen::VectorXd::Zero(m);
      c.b.resize(m);
    }
  }

  PdmpResult res;
  const std::size_t N = step_count(T, dt);
  const double tol = 1e-9 * dt;
  std::size_t gi = 0, ci = 0;
  auto record = [&](double t) {
    while (gi < opt.record_grid.size() && opt.record_grid[gi] <= t + tol) {
      res.grid_states.push_back(c.s.z);
      ++gi;
    }
  };
  c.s.t = step_time(first_step, N, T, dt);
  record(c.s.t);
  while (ci < opt.capture_steps.size() && opt.capture_steps[ci] < first_step) ++ci;

  for (std::size_t n = first_step; n < N; ++n) {
    const double t = step_time(n, N, T, dt);
    const double h = (n + 1 == N) ? T - t : dt;
    c.s.t = t;
    while (ci < opt.capture_steps.size() && opt.capture_steps[ci] == n) {
      PdmpCapture cap;
      cap.step = n;
      cap.t = t;
      cap.z = c.s.z;
      cap.y = c.s.y;
      for (std::size_t j = 0; j < rd_.size(); ++j)
        cap.D.push_back(discrete_derivative(j, c.s.z, c.s.y));
      res.captures.push_back(std::move(cap));
      ++ci;
    }
    advance(c, h, augmented, with_phi);
    for (std::size_t j = 0; j < rd_.size(); ++j) c.s.Tk[j] += h * c.ld[j];
    for (std::size_t j = 0; j < rd_.size(); ++j) {
      if (!(c.s.Tk[j] > c.s.Pk[j])) continue;
      fire(c, j);
      // The overshoot is discarded so a reaction whose rate dropped to zero
      // cannot fire again on the next step.
      c.s.Tk[j] = c.s.Pk[j];
      const double inc = rng.exponential();
      c.s.Pk[j] += inc;
      if (opt.record_increments) res.increments.push_back(inc);
      if (++res.firings > max_events)
        throw IntegrationFailure("discrete firing budget exhausted", t);
    }
    c.s.t = step_time(n + 1, N, T, dt);
    record(c.s.t);
  }
  c.s.t = T;
  record(T);
  if (c.quad_on) {
    Eigen::VectorXd yq = c.s.Phi * c.quad;
    res.y_quadrature.assign(yq.data(), yq.data() + m);
  }
  res.final = std::move(c.s);
  return res;
}

PdmpResult pdmp_simulate(const ReducedPDMP& m, std::span<const double> params,
                         double T, const StepConfig& cfg, UniformSource& rng) {
  PdmpEngine e(m, {params.begin(), params.end()});
  PdmpRunOptions opt;
  opt.record_grid = cfg.record_grid;
  return e.run(e.initial_state(), 0, T, cfg.step(T), rng, opt, cfg.max_events);
}

PdmpResult pdmp_simulate_augmented(const ReducedPDMP& m,
                                   std::span<const double> params,
                                   std::size_t theta, double T,
                                   const StepConfig& cfg, UniformSource& rng,
                                   bool with_phi) {
  PdmpEngine e(m, {params.begin(), params.end()}, theta);
  PdmpRunOptions opt;
  opt.augmented = true;
  opt.with_phi = with_phi;
  opt.record_grid = cfg.record_grid;
  return e.run(e.initial_state(), 0, T, cfg.step(T), rng, opt, cfg.max_events);
}

CoupledPdmp::CoupledPdmp(const PdmpEngine& a, const PdmpEngine& b) : a_(&a), b_(&b) {
  if (a.m_ != b.m_) throw std::invalid_argument("coupled engines need one model");
}

CoupledPdmpResult CoupledPdmp::run(std::span<const double> za,
                                   std::span<const double> zb,
                                   std::size_t first_step, double T, double dt,
                                   UniformSource& rng,
                                   std::size_t max_events) const {
  const PdmpEngine& A = *a_;
  const PdmpEngine& B = *b_;
  const std::size_t J = A.rd_.size();
  const std::size_t m = A.cont_.size();
  const bool aug = A.tilt_.has_value() || B.tilt_.has_value();
  PdmpEngine::Component ca, cb;
  ca.s.z.assign(za.begin(), za.end());
  cb.s.z.assign(zb.begin(), zb.end());
  A.prepare(ca);
  B.prepare(cb);
  if (aug) {
    ca.s.y.assign(m, 0.0);
    cb.s.y.assign(m, 0.0);
  }
  std::vector<double> Tc(3 * J, 0.0), Pc(3 * J);
  for (auto& p : Pc) p = rng.exponential();

  CoupledPdmpResult res;
  auto discrete_equal = [&] {
    for (std::size_t i : A.m_->discrete_species)
      if (ca.s.z[i] != cb.s.z[i]) return false;
    return true;
  };
  const std::size_t N = step_count(T, dt);
  bool split = !discrete_equal();
  if (split) res.tau = step_time(first_step, N, T, dt);
  for (std::size_t n = first_step; n < N; ++n) {
    const double t = step_time(n, N, T, dt);
    const double h = (n + 1 == N) ? T - t : dt;
    ca.s.t = cb.s.t = t;
    A.advance(ca, h, aug, false);
    B.advance(cb, h, aug, false);
    for (std::size_t j = 0; j < J; ++j) {
      const double a = ca.ld[j], b = cb.ld[j];
      const double lo = std::min(a, b);
      const double ra = a - lo, rb = b - lo;
      res.max_residual_product = std::max(res.max_residual_product, ra * rb);
      Tc[3 * j] += h * lo;
      Tc[3 * j + 1] += h * ra;
      Tc[3 * j + 2] += h * rb;
    }
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t w = 0; w < 3; ++w) {
        const std::size_t q = 3 * j + w;
        if (!(Tc[q] > Pc[q])) continue;
        if (w != 2) A.fire(ca, j);
        if (w != 1) B.fire(cb, j);
        Tc[q] = Pc[q];
        Pc[q] += rng.exponential();
        if (++res.events > max_events)
          throw IntegrationFailure("coupled firing budget exhausted", t);
      }
    if (!split && !discrete_equal()) {
      split = true;
      res.tau = step_time(n + 1, N, T, dt);
    }
  }
  res.a = std::move(ca.s.z);
  res.b = std::move(cb.s.z);
  return res;
}

double y_phi_relative_error(const PdmpResult& r) {
  const auto& y = r.final.y;
  const auto& q = r.y_quadrature;
  if (y.size() != q.size()) throw std::invalid_argument("no quadrature recorded");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (y[i] - q[i]) * (y[i] - q[i]);
    den += y[i] * y[i];
  }
  if (den == 0.0) return std::sqrt(num);
  return std::sqrt(num / den);
}

}  // namespace hybridsens
