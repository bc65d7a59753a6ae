#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>

#include "common.hpp"
#include "hybridsens/oracle.hpp"

using namespace hybridsens;
using testutil::net_from;

namespace {

const double kBdMean = 10.0 * (1.0 - std::exp(-1.0));
const double kBdSens = 1.0 - std::exp(-1.0);

ReactionNetwork birth_death() { return load_model(testutil::model_path("birth_death.json")); }

}  // namespace

TEST_CASE("state space indexing is lexicographic and invertible") {
  auto sp = TruncatedStateSpace({1, 0}, {3, 2});
  CHECK(sp.size() == 9);
  std::vector<double> x{2, 1};
  CHECK(sp.index(x) == 4);
  CHECK(sp.state(4) == x);
  for (std::size_t i = 0; i < sp.size(); ++i) CHECK(sp.index(sp.state(i)) == i);
  CHECK_FALSE(sp.contains(std::vector<double>{0, 0}));
}

TEST_CASE("no dynamics leaves all mass on the initial state") {
  auto n = net_from(R"({"species":[{"name":"X","initial":0}],
    "parameters":{"k":0},
    "reactions":[{"reactants":{"X":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}],
    "observables":{"X":"X"}})");
  auto sp = TruncatedStateSpace::box({0});
  auto sol = cme_solve(n, n.param_values(), sp, 3.0);
  REQUIRE(sol.p.size() == 1);
  CHECK(sol.p[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("birth-death mean matches the analytic immigration-death mean") {
  auto n = birth_death();
  auto sp = TruncatedStateSpace::box({200});
  auto sol = cme_solve(n, n.param_values(), sp, 1.0);
  const double mean = cme_expectation(n, n.param_values(), sp, sol, "X");
  CHECK(std::abs(mean - kBdMean) < 1e-6);
  const double mass = std::accumulate(sol.p.begin(), sol.p.end(), 0.0);
  CHECK(std::abs(mass + sol.leakage - 1.0) < 1e-8);
  CHECK(sol.leakage == 0.0);
  CHECK(sol.tail_estimate < 1e-12);
}

TEST_CASE("enlarging the box never loses mass and moves the mean by at most the tail") {
  auto n = birth_death();
  auto small = TruncatedStateSpace::box({14});
  auto large = TruncatedStateSpace::box({60});
  auto ps = cme_solve(n, n.param_values(), small, 1.0);
  auto pl = cme_solve(n, n.param_values(), large, 1.0);
  const double ms = std::accumulate(ps.p.begin(), ps.p.end(), 0.0);
  const double ml = std::accumulate(pl.p.begin(), pl.p.end(), 0.0);
  CHECK(ml >= ms - 1e-12);
  const double es = cme_expectation(n, n.param_values(), small, ps, "X");
  const double el = cme_expectation(n, n.param_values(), large, pl, "X");
  CHECK(ps.tail_estimate > 0.0);
  CHECK(std::abs(es - el) <= ps.tail_estimate * 60.0 + 1e-12);
}

TEST_CASE("telegraph gene relaxes to the symmetric Bernoulli law") {
  auto n = load_model(testutil::model_path("telegraph.json"));
  auto sp = TruncatedStateSpace::box({1, 1});
  auto sol = cme_solve(n, n.param_values(), sp, 20.0);
  CHECK(cme_expectation(n, n.param_values(), sp, sol, "on") ==
        doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("finite-difference sensitivities from the master equation") {
  auto n = birth_death();
  auto sp = TruncatedStateSpace::box({200});
  CHECK(std::abs(cme_sensitivity_fd(n, "theta", "X", sp, 1.0, 1e-4) - kBdSens) < 1e-5);

  auto idle = net_from(R"({"species":[{"name":"X","initial":0}],
    "parameters":{"theta":10,"unused":3},
    "reactions":[{"reactants":{},"products":{"X":1},"rate":{"type":"mass_action","kappa":"theta"}},
                 {"reactants":{"X":1},"products":{},"rate":{"type":"mass_action","kappa":"1"}}],
    "observables":{"X":"X"}})");
  CHECK(std::abs(cme_sensitivity_fd(idle, "unused", "X", sp, 1.0, 1e-4)) < 1e-9);

  auto birth = load_model(testutil::model_path("pure_birth.json"));
  auto bsp = TruncatedStateSpace::box({80});
  CHECK(std::abs(cme_sensitivity_fd(birth, "theta", "X", bsp, 2.0, 1e-4) - 2.0) < 1e-6);
}

TEST_CASE("closed-form birth-death reference") {
  auto [m, s] = birth_death_reference(10.0, 1.0, 1.0);
  CHECK(m == doctest::Approx(6.32121).epsilon(1e-6));
  CHECK(s == doctest::Approx(0.63212).epsilon(1e-5));
  auto [m0, s0] = birth_death_reference(10.0, 1.0, 0.0);
  CHECK(m0 == 0.0);
  CHECK(s0 == 0.0);
  auto [mi, si] = birth_death_reference(10.0, 1.0, 100.0);
  CHECK(mi == doctest::Approx(10.0));
  CHECK(si == doctest::Approx(1.0));
}

TEST_CASE("oversized state spaces are refused") {
  auto n = birth_death();
  CmeOptions opt;
  opt.cap = 100;
  CHECK_THROWS(cme_solve(n, n.param_values(), TruncatedStateSpace::box({200}), 1.0, opt));
}
