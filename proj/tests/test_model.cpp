#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "common.hpp"
#include "hybridsens/model.hpp"

using namespace hybridsens;
using testutil::model_path;
using testutil::net_from;

TEST_CASE("shipped CTMC models load with the expected shape") {
  auto gene = load_model(model_path("gene_full.json"));
  CHECK(gene.num_species() == 3);
  CHECK(gene.num_reactions() == 6);
  auto mm = load_model(model_path("mm_full.json"));
  CHECK(mm.num_species() == 4);
  CHECK(mm.num_reactions() == 3);
  for (const char* f : {"birth_death.json", "pure_birth.json", "dimer.json", "telegraph.json",
                        "toy_switch.json", "gene_qsa.json", "mm_qsa.json"})
    CHECK_NOTHROW(load_model(model_path(f)));
}

TEST_CASE("structural validation") {
  // products equal reactants
  CHECK_THROWS_AS(net_from(R"({"species":[{"name":"A","initial":1}],"parameters":{"k":1},
    "reactions":[{"reactants":{"A":1},"products":{"A":1},"rate":{"type":"mass_action","kappa":"k"}}]})"),
                  ValidationError);
  // unknown species in a reaction
  try {
    net_from(R"({"species":[{"name":"A","initial":1}],"parameters":{"k":1},
      "reactions":[{"reactants":{"B":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}]})");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'B'") != std::string::npos);
  }
  // kappa may not read the state
  CHECK_THROWS_AS(net_from(R"({"species":[{"name":"A","initial":1}],"parameters":{"k":1},
    "reactions":[{"reactants":{"A":1},"products":{},"rate":{"type":"mass_action","kappa":"k*A"}}]})"),
                  ValidationError);
  // negative kappa
  CHECK_THROWS_AS(net_from(R"({"species":[{"name":"A","initial":1}],"parameters":{"k":-1},
    "reactions":[{"reactants":{"A":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}]})"),
                  ValidationError);
  // duplicate names across namespaces
  CHECK_THROWS_AS(net_from(R"({"species":[{"name":"k","initial":1}],"parameters":{"k":1},
    "reactions":[{"reactants":{"k":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}]})"),
                  ValidationError);
  // non-integer copy number
  CHECK_THROWS_AS(net_from(R"({"species":[{"name":"A","initial":1.5}],"parameters":{"k":1},
    "reactions":[{"reactants":{"A":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}]})"),
                  ValidationError);
  // no reactions
  CHECK_THROWS_AS(net_from(R"({"species":[{"name":"A","initial":1}],"reactions":[]})"),
                  ValidationError);
}

TEST_CASE("stoichiometry columns") {
  auto mm = load_model(model_path("mm_full.json"));
  auto Z = mm.stoichiometry();
  CHECK(Z.column(0) == std::vector<int>{-1, 0, -1, 1});
  CHECK(Z.column(2) == std::vector<int>{0, 1, 1, -1});
  // E + ES is conserved by every reaction
  for (std::size_t k = 0; k < mm.num_reactions(); ++k) CHECK(Z(2, k) + Z(3, k) == 0);
  auto gene = load_model(model_path("gene_full.json"));
  CHECK(gene.stoichiometry().column(2) == std::vector<int>{1, 0, 0});
}

TEST_CASE("propensities") {
  auto n = net_from(R"({"species":[{"name":"S","initial":4}],"parameters":{"k0":7.5,"k2":2},
    "reactions":[{"reactants":{},"products":{"S":1},"rate":{"type":"mass_action","kappa":"k0"}},
                 {"reactants":{"S":2},"products":{},"rate":{"type":"mass_action","kappa":"k2"}}]})");
  const auto& p = n.param_values();
  for (double x : {0.0, 4.0, 17.0}) CHECK(n.propensity(0, std::vector<double>{x}, p) == 7.5);
  CHECK(n.propensity(1, std::vector<double>{4}, p) == 12.0);

  auto gene = load_model(model_path("gene_full.json"));
  CHECK(gene.propensity(2, std::vector<double>{0, 0, 1}, gene.param_values()) ==
        doctest::Approx(20.0));
  CHECK(gene.propensity(0, std::vector<double>{0, 0, 0}, gene.param_values()) ==
        doctest::Approx(100.0));
}

TEST_CASE("mass-action propensities vanish below the reactant counts") {
  auto n = net_from(R"({"species":[{"name":"A","initial":0},{"name":"B","initial":0}],
    "parameters":{"k":1.3},
    "reactions":[{"reactants":{"A":3,"B":2},"products":{},"rate":{"type":"mass_action","kappa":"k"}}]})");
  for (int a = 0; a <= 5; ++a)
    for (int b = 0; b <= 4; ++b) {
      const double v = n.propensity(0, std::vector<double>{double(a), double(b)}, n.param_values());
      if (a < 3 || b < 2)
        CHECK(v == 0.0);
      else
        CHECK(v > 0.0);
    }
}

TEST_CASE("propensities are nonnegative on shipped models") {
  for (const char* f : {"gene_full.json", "mm_full.json", "birth_death.json", "dimer.json",
                        "toy_switch.json", "gene_qsa.json", "mm_qsa.json"}) {
    auto n = load_model(model_path(f));
    std::vector<double> x(n.num_species());
    for (int rep = 0; rep < 200; ++rep) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = (rep * 7 + i * 13) % 23;
      for (std::size_t k = 0; k < n.num_reactions(); ++k) {
        double v = -1.0;
        try {
          v = n.propensity(k, x, n.param_values());
        } catch (const NumericDomainError&) {
          v = 0.0;  // e.g. 1-Gon below zero is outside the model's state space
          for (double xi : x) CHECK(xi >= 0.0);
          if (std::string(f) != "gene_full.json") FAIL("unexpected domain error");
        }
        CHECK(v >= 0.0);
      }
    }
  }
}

TEST_CASE("slightly negative coordinates are clamped, larger ones rejected") {
  auto n = load_model(model_path("birth_death.json"));
  CHECK(n.propensity(1, std::vector<double>{-1e-12}, n.param_values()) == 0.0);
  CHECK_THROWS_AS(n.propensity(1, std::vector<double>{-1e-3}, n.param_values()),
                  NumericDomainError);
}

TEST_CASE("observables and their gradients") {
  auto n = net_from(R"({"species":[{"name":"z1","initial":0},{"name":"z2","initial":0}],
    "continuous_species":["z2"], "parameters":{"k":1},
    "reactions":[{"reactants":{"z1":1},"products":{},"rate":{"type":"mass_action","kappa":"k"}}],
    "observables":{"protein":"z2","sq":"z1*z1"}})");
  std::vector<double> z{3, 40.5};
  std::vector<std::size_t> cont{1};
  CHECK(n.observable_value("protein", z, n.param_values()) == 40.5);
  CHECK(n.observable_gradient("protein", z, n.param_values(), cont) == std::vector<double>{1.0});
  std::vector<double> z4{4, 0};
  CHECK(n.observable_value("sq", z4, n.param_values()) == 16.0);
  CHECK(n.observable_gradient("sq", z4, n.param_values(), cont) == std::vector<double>{0.0});

  auto mm = load_model(model_path("mm_reduced.json"));
  CHECK(mm.observable_value("product", std::vector<double>{0.2, 0.3}, mm.param_values()) == 0.3);
  CHECK_THROWS(mm.observable("nope"));
}

TEST_CASE("documents round-trip through JSON") {
  for (const char* f : {"gene_full.json", "mm_full.json", "toy_switch.json"}) {
    auto n = load_model(model_path(f));
    auto again = parse_network(n.to_json());
    CHECK(again.to_json() == n.to_json());
    CHECK(again.num_reactions() == n.num_reactions());
  }
}

TEST_CASE("parameters can be replaced by name") {
  auto n = load_model(model_path("birth_death.json"));
  auto m = n.with_param("theta", 3.0);
  CHECK(m.param_values()[m.param_index("theta")] == 3.0);
  CHECK_THROWS(n.with_param("missing", 1.0));
}
