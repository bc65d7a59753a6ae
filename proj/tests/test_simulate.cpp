#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "common.hpp"
#include "hybridsens/ctmc.hpp"
#include "hybridsens/pdmp.hpp"
#include "hybridsens/stats.hpp"

using namespace hybridsens;
using testutil::model_path;
using testutil::net_from;
using testutil::z_of;

namespace {

const double kBdMean = 10.0 * (1.0 - std::exp(-1.0));

std::vector<double> final_values(std::size_t paths, const std::function<double(std::size_t)>& f) {
  std::vector<double> v(paths);
  parallel_for(paths, [&](std::size_t p) { v[p] = f(p); });
  return v;
}

ReducedPDMP decay(double k) {
  return testutil::reduced_from(R"({"kind":"pdmp","species":[{"name":"x","initial":1}],
    "continuous_species":["x"],"discrete_species":[],"parameters":{"k":)" +
                                std::to_string(k) + R"(},
    "reactions":[{"name":"d","reactants":{"x":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}],
    "continuous_reactions":["d"],"discrete_reactions":[],"observables":{"x":"x"}})");
}

}  // namespace

TEST_CASE("an absorbing initial state produces no events") {
  auto n = net_from(R"({"species":[{"name":"X","initial":0}],"parameters":{"k":1},
    "reactions":[{"reactants":{"X":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}]})");
  RngStream rng(1, 0);
  auto r = ssa_direct(n, n.param_values(), n.initial_state(), 5.0, rng);
  CHECK(r.events == 0);
  CHECK(r.absorbed);
  CHECK(r.final_state == n.initial_state());
  auto q = nrm_time_change(n, n.param_values(), n.initial_state(), 5.0, rng);
  CHECK(q.events == 0);
}

TEST_CASE("birth-death mean from both exact simulators") {
  auto n = load_model(model_path("birth_death.json"));
  CtmcSimulator sim(n, n.param_values());
  const std::size_t P = 10000;
  auto a = SummaryStats::of(final_values(P, [&](std::size_t p) {
    RngStream rng(kDefaultSeed, p);
    return sim.ssa_direct(n.initial_state(), 1.0, rng).final_state[0];
  }));
  auto b = SummaryStats::of(final_values(P, [&](std::size_t p) {
    RngStream rng(kDefaultSeed + 1, p);
    return sim.nrm(n.initial_state(), 1.0, rng).final_state[0];
  }));
  CHECK(std::abs(a.mean - kBdMean) < 3 * a.std_error);
  CHECK(std::abs(b.mean - kBdMean) < 3 * b.std_error);
  CHECK(z_of(a.mean, a.std_error, b.mean, b.std_error) < 3.0);
  // Poisson law: variance equals the mean
  CHECK(std::abs(a.variance - kBdMean) < 0.3);
}

TEST_CASE("next reaction method inverts the unit-rate clock") {
  auto n = load_model(model_path("pure_birth.json")).with_param("theta", 1.0);
  testutil::Scripted u({std::exp(-2.0), 0.5});
  CtmcOptions opt;
  opt.record_events = true;
  auto r = nrm_time_change(n, n.param_values(), n.initial_state(), 2.5, u, opt);
  REQUIRE(r.path.times.size() >= 1);
  CHECK(r.path.times[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("exact paths are deterministic under a fixed stream") {
  auto n = load_model(model_path("gene_full.json"));
  CtmcOptions opt;
  opt.record_events = true;
  RngStream a(9, 2), b(9, 2);
  auto r1 = ssa_direct(n, n.param_values(), n.initial_state(), 2.0, a, opt);
  auto r2 = ssa_direct(n, n.param_values(), n.initial_state(), 2.0, b, opt);
  CHECK(r1.path.times == r2.path.times);
  CHECK(r1.path.states == r2.path.states);
}

TEST_CASE("Michaelis-Menten paths conserve the enzyme") {
  auto n = load_model(model_path("mm_full.json"));
  CtmcOptions opt;
  opt.record_events = true;
  RngStream rng(5, 0);
  auto r = ssa_direct(n, n.param_values(), n.initial_state(), 0.2, rng, opt);
  CHECK(r.events > 500);
  for (const auto& x : r.path.states) CHECK(x[2] + x[3] == 20.0);
}

TEST_CASE("event budget exhaustion keeps the partial path") {
  auto n = load_model(model_path("birth_death.json"));
  CtmcOptions opt;
  opt.max_events = 5;
  RngStream rng(1, 0);
  try {
    ssa_direct(n, n.param_values(), n.initial_state(), 10.0, rng, opt);
    FAIL("expected truncation");
  } catch (const TruncatedPathError& e) {
    CHECK(e.partial.events == 5);
  }
}

TEST_CASE("scaled process") {
  SUBCASE("identity scaling reproduces the plain simulator") {
    auto n = load_model(model_path("birth_death.json"));
    ScalingSpec s;
    s.alpha = {Rational(0)};
    s.beta = {Rational(0), Rational(0)};
    s.N0 = 2;
    std::vector<double> grid{0.25, 0.5, 1.0};
    RngStream a(3, 1), b(3, 1);
    auto z = simulate_scaled(n, s, 1.0, Rational(0), n.param_values(), 1.0, a, grid);
    CtmcOptions opt;
    opt.grid = grid;
    auto x = ssa_direct(n, n.param_values(), n.initial_state(), 1.0, b, opt);
    CHECK(z == x.grid_states);
  }
  SUBCASE("gene protein is reported per N0") {
    auto n = load_model(model_path("gene_full.json"));
    auto s = load_scaling(model_path("gene_full.scaling.json"), n);
    std::vector<double> grid{1.0, 2.0};
    RngStream a(4, 0), b(4, 0);
    auto z = simulate_scaled(n, s, 1000, Rational(0), n.param_values(), 2.0, a, grid);
    CtmcOptions opt;
    opt.grid = grid;
    auto x = ssa_direct(n, n.param_values(), n.initial_state(), 2.0, b, opt);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      CHECK(z[g][0] == x.grid_states[g][0]);
      CHECK(z[g][1] == doctest::Approx(x.grid_states[g][1] / 1000.0));
      CHECK(z[g][2] == x.grid_states[g][2]);
    }
  }
  SUBCASE("birth-death in the thermodynamic limit") {
    auto n = net_from(R"({"species":[{"name":"X","initial":0}],"parameters":{"N0":100,"theta":10},
      "reactions":[{"name":"b","reactants":{},"products":{"X":1},"rate":{"type":"mass_action","kappa":"N0*theta"}},
                   {"name":"d","reactants":{"X":1},"products":{},"rate":{"type":"mass_action","kappa":"1"}}]})");
    auto s = parse_scaling(Json::parse(R"({"alpha":{"X":"1"},"beta":{"b":"1","d":"0"},"N0":100,"gamma":"0"})"), n);
    auto st = SummaryStats::of(final_values(2000, [&](std::size_t p) {
      RngStream rng(8, p);
      return simulate_scaled(n, s, 100, Rational(0), n.param_values(), 1.0, rng).back()[0];
    }));
    CHECK(std::abs(st.mean - kBdMean) < 3 * st.std_error);
  }
}

TEST_CASE("pure decay converges at first order in dt") {
  auto m = decay(0.1);
  double prev = 0.0;
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    RngStream rng(1, 0);
    StepConfig cfg;
    cfg.dt = dt;
    auto r = pdmp_simulate(m, m.net.param_values(), 50.0, cfg, rng);
    const double err = std::abs(r.final.z[0] - std::exp(-5.0));
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(10.0).epsilon(0.05));
    prev = err;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("without discrete reactions the engine is a plain Euler loop") {
  auto m = load_reduced(model_path("mm_reduced.json"));
  testutil::Scripted rng({0.5});
  StepConfig cfg;
  cfg.dt = 1e-3;
  auto r = pdmp_simulate(m, m.net.param_values(), 1.0, cfg, rng);
  CHECK(rng.used() == 0);
  double S = 0.5, P = 0.0;
  const std::size_t N = step_count(1.0, 1e-3);
  for (std::size_t n = 0; n < N; ++n) {
    const double h = n + 1 == N ? 1.0 - static_cast<double>(n) * 1e-3 : 1e-3;
    const double rate = 20 * 0.3 * 0.8 * S / (1 + 0.8 + 0.3 * S);
    S += h * -rate;
    P += h * rate;
  }
  CHECK(r.final.z[0] == S);
  CHECK(r.final.z[1] == P);
}

TEST_CASE("a unit-rate discrete clock fires in the step after the threshold") {
  auto m = testutil::reduced_from(R"({"kind":"pdmp","species":[{"name":"X","initial":0}],
    "continuous_species":[],"discrete_species":["X"],"parameters":{"theta":1},
    "reactions":[{"name":"b","reactants":{},"products":{"X":1},"rate":{"type":"mass_action","kappa":"theta"}}],
    "continuous_reactions":[],"discrete_reactions":["b"],"observables":{"X":"X"}})");
  PdmpEngine e(m, m.net.param_values());
  testutil::Scripted u({std::exp(-2.005), 1e-300});
  PdmpRunOptions opt;
  for (int i = 0; i <= 300; ++i) opt.record_grid.push_back(i * 0.01);
  auto r = e.run(e.initial_state(), 0, 3.0, 0.01, u, opt);
  std::size_t first = 0;
  while (r.grid_states[first][0] == 0.0) ++first;
  const double t = first * 0.01;
  CHECK(t > 2.005);
  CHECK(t <= 2.005 + 0.01 + 1e-12);
}

TEST_CASE("threshold increments are unit exponentials") {
  auto m = load_reduced(model_path("gene_reduced.json"));
  PdmpEngine e(m, m.net.param_values());
  PdmpRunOptions opt;
  opt.record_increments = true;
  std::vector<double> inc;
  for (std::size_t p = 0; inc.size() < 10000; ++p) {
    RngStream rng(2, p);
    auto r = e.run(e.initial_state(), 0, 50.0, 1e-2, rng, opt);
    inc.insert(inc.end(), r.increments.begin(), r.increments.end());
  }
  const double mean = SummaryStats::of(inc).mean;
  CHECK(mean >= 0.97);
  CHECK(mean <= 1.03);
}

TEST_CASE("discrete species never go negative") {
  auto m = load_reduced(model_path("gene_reduced.json"));
  PdmpEngine e(m, m.net.param_values());
  PdmpRunOptions opt;
  for (double t = 0; t <= 50; t += 0.5) opt.record_grid.push_back(t);
  for (std::size_t p = 0; p < 200; ++p) {
    RngStream rng(6, p);
    auto r = e.run(e.initial_state(), 0, 50.0, 5e-2, rng, opt);
    for (const auto& z : r.grid_states) CHECK(z[0] >= 0.0);
  }
}

TEST_CASE("the sensitivity state") {
  SUBCASE("stays zero without continuous reactions") {
    auto n = load_model(model_path("birth_death.json"));
    auto m = trivial_reduction(n);
    RngStream rng(1, 0);
    StepConfig cfg;
    cfg.dt = 1e-2;
    auto r = pdmp_simulate_augmented(m, m.net.param_values(), 0, 2.0, cfg, rng, true);
    CHECK(r.final.y.empty());
  }
  SUBCASE("matches a central difference of the Euler solution") {
    auto m = load_reduced(model_path("mm_reduced.json"));
    const std::size_t th = m.net.param_index("theta3");
    StepConfig cfg;
    cfg.dt = 1e-4;
    RngStream rng(1, 0);
    auto r = pdmp_simulate_augmented(m, m.net.param_values(), th, 1.0, cfg, rng, false);
    auto solve = [&](double v) {
      auto p = m.net.param_values();
      p[th] = v;
      RngStream g(1, 0);
      return pdmp_simulate(m, p, 1.0, cfg, g).final.z[1];
    };
    const double h = 1e-5, t3 = m.net.param_values()[th];
    const double fd = (solve(t3 + h) - solve(t3 - h)) / (2 * h);
    CHECK(std::abs(r.final.y[1] - fd) <= 1e-5 * std::abs(fd));
  }
  SUBCASE("fundamental matrix of linear decay") {
    auto m = decay(0.1);
    StepConfig cfg;
    cfg.dt = 1e-4;
    RngStream rng(1, 0);
    auto r = pdmp_simulate_augmented(m, m.net.param_values(), 0, 50.0, cfg, rng, true);
    CHECK(r.final.Phi(0, 0) == doctest::Approx(std::exp(-5.0)).epsilon(1e-3));
    // y solves y' = -x - k y, so y(T) = -T x(T)
    CHECK(r.final.y[0] == doctest::Approx(-50.0 * std::exp(-5.0)).epsilon(1e-3));
  }
}

TEST_CASE("y matches its reconstruction through the fundamental matrix") {
  auto m = load_reduced(model_path("gene_reduced.json"));
  const double dt = 1e-2;
  for (const char* th : {"theta2", "theta4"}) {
    PdmpEngine e(m, m.net.param_values(), m.net.param_index(th));
    PdmpRunOptions opt;
    opt.augmented = true;
    opt.phi_quadrature = true;
    for (std::size_t p = 0; p < 20; ++p) {
      RngStream rng(3, p);
      auto r = e.run(e.initial_state(), 0, 50.0, dt, rng, opt);
      CHECK(y_phi_relative_error(r) <= 5 * dt);
    }
  }
}

TEST_CASE("hybrid paths are deterministic") {
  auto m = load_reduced(model_path("gene_reduced.json"));
  StepConfig cfg;
  cfg.dt = 1e-2;
  RngStream a(5, 5), b(5, 5);
  auto r1 = pdmp_simulate(m, m.net.param_values(), 20.0, cfg, a);
  auto r2 = pdmp_simulate(m, m.net.param_values(), 20.0, cfg, b);
  CHECK(r1.final.z == r2.final.z);
  CHECK(r1.firings == r2.firings);
}

TEST_CASE("split coupling") {
  auto m = load_reduced(model_path("gene_reduced.json"));
  const auto p = m.net.param_values();
  SUBCASE("identical parameters give identical paths") {
    PdmpEngine a(m, p), b(m, p);
    CoupledPdmp pair(a, b);
    for (std::size_t k = 0; k < 20; ++k) {
      RngStream rng(7, k);
      auto z0 = m.net.initial_state();
      auto r = pair.run(z0, z0, 0, 50.0, 1e-2, rng);
      CHECK(r.a == r.b);
      CHECK(std::isinf(r.tau));
      CHECK(r.max_residual_product == 0.0);
    }
  }
  SUBCASE("residual clocks are never both active") {
    auto q = p;
    q[m.net.param_index("theta1")] *= 1.1;
    PdmpEngine a(m, p), b(m, q);
    CoupledPdmp pair(a, b);
    for (std::size_t k = 0; k < 100; ++k) {
      RngStream rng(8, k);
      auto z0 = m.net.initial_state();
      CHECK(pair.run(z0, z0, 0, 50.0, 5e-2, rng).max_residual_product == 0.0);
    }
  }
}

TEST_CASE("PDMP and SSA gene means agree at T=50") {
  auto m = load_reduced(model_path("gene_reduced.json"));
  auto n = load_model(model_path("gene_full.json"));
  auto s = load_scaling(model_path("gene_full.scaling.json"), n);
  const std::size_t P = 1500;
  StepConfig cfg;
  cfg.dt = 1e-2;
  auto a = SummaryStats::of(final_values(P, [&](std::size_t k) {
    RngStream rng(11, k);
    return pdmp_simulate(m, m.net.param_values(), 50.0, cfg, rng).final.z[1];
  }));
  auto b = SummaryStats::of(final_values(P, [&](std::size_t k) {
    RngStream rng(12, k);
    return simulate_scaled(n, s, 1000, Rational(0), n.param_values(), 50.0, rng).back()[1];
  }));
  CHECK(z_of(a.mean, a.std_error, b.mean, b.std_error) < 3.0);
}
