#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <cstring>
#include <sstream>

#include "common.hpp"
#include "hybridsens/csv.hpp"
#include "hybridsens/rng.hpp"
#include "hybridsens/stats.hpp"

using namespace hybridsens;

TEST_CASE("Philox4x64-10 golden blocks") {
  using A = std::array<std::uint64_t, 4>;
  CHECK(RngStream::philox4x64_10({0, 0, 0, 0}, {0, 0}) ==
        A{0x16554d9eca36314cULL, 0xdb20fe9d672d0fdcULL, 0xd7e772cee186176bULL,
          0x7e68b68aec7ba23bULL});
  RngStream s(kDefaultSeed, 0);
  const A b0{0xda198f4d65bdfb4dULL, 0x546726079b2ca3d6ULL, 0x169d1993ac278983ULL,
             0x4efdc1b79fc7c527ULL};
  const A b1{0x5a30fc8599cd9a77ULL, 0x59ca23e32f4147dfULL, 0x32b2da27d3308ea9ULL,
             0xc49631fd034ac421ULL};
  for (auto w : b0) CHECK(s.next_u64() == w);
  for (auto w : b1) CHECK(s.next_u64() == w);
}

TEST_CASE("uniforms use the top 53 bits") {
  RngStream s(kDefaultSeed, 0);
  CHECK(s.uniform() == static_cast<double>(0xda198f4d65bdfb4dULL >> 11) * 0x1p-53);
}

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
    CHECK(x != d.next_u64());
  }
  auto e = RngStream::derive(42, {3, 0, 1});
  auto f = RngStream::derive(42, {3, 1, 0});
  CHECK(e.next_u64() != f.next_u64());
}

TEST_CASE("independent streams are uncorrelated") {
  const int n = 20000;
  RngStream a(1, 0), b(1, 1);
  double sab = 0, sa = 0, sb = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.uniform() - 0.5, y = b.uniform() - 0.5;
    sab += x * y;
    sa += x;
    sb += y;
  }
  // correlation has standard deviation 1/sqrt(n)
  const double corr = (sab / n - sa / n * sb / n) / (1.0 / 12.0);
  CHECK(std::abs(corr) < 4.0 / std::sqrt(n));
}

TEST_CASE("exponential redraws an exact zero") {
  testutil::Scripted s({0.0, std::exp(-2.0)});
  CHECK(s.exponential() == doctest::Approx(2.0));
  CHECK(s.used() == 2);
}

TEST_CASE("summary statistics") {
  std::vector<double> v{1, 2, 3, 4};
  auto s = SummaryStats::of(v);
  CHECK(s.mean == 2.5);
  CHECK(s.variance == doctest::Approx(5.0 / 3.0));
  CHECK(s.std_error == doctest::Approx(std::sqrt(5.0 / 12.0)));
  std::vector<double> c(7, 0.1);
  auto sc = SummaryStats::of(c);
  CHECK(sc.mean == 0.1);
  CHECK(sc.std_error == 0.0);
  CHECK(z_score(1, 0, 1, 0) == 0.0);
  CHECK(z_score(1, 3, 5, 4) == doctest::Approx(0.8));
}

TEST_CASE("pairwise sums depend only on the length") {
  std::vector<double> v;
  for (int i = 0; i < 1001; ++i) v.push_back(1.0 / (i + 1));
  const double a = pairwise_sum(v);
  const double b = pairwise_sum(v);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  CHECK(a == doctest::Approx(7.4864698).epsilon(1e-7));
}

TEST_CASE("histograms and total variation") {
  std::vector<double> v{0, 1, 1, 2, 7, -3};
  auto h = integer_histogram(v, 0, 3);
  CHECK(h.counts == std::vector<std::size_t>{2, 2, 1, 1});
  CHECK(h.total() == v.size());
  std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  CHECK(total_variation(p, q) == doctest::Approx(0.25));
}

TEST_CASE("parallel_for reports the lowest failing index") {
  setenv("HYBRIDSENS_THREADS", "3", 1);
  CHECK(worker_count() == 3);
  std::vector<int> out(100, 0);
  parallel_for(100, [&](std::size_t i) { out[i] = static_cast<int>(i); });
  for (int i = 0; i < 100; ++i) CHECK(out[i] == i);
  try {
    parallel_for(50, [&](std::size_t i) {
      if (i == 17 || i == 40) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "17");
  }
  unsetenv("HYBRIDSENS_THREADS");
}

TEST_CASE("numbers print at round-trip precision") {
  for (double x : {0.1, 1.0 / 3.0, 6.321205588285577, 1e-300, -2.5e17}) {
    CHECK(std::stod(format_number(x)) == x);
  }
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("CSV quoting round-trips") {
  std::ostringstream os;
  CsvWriter w(os);
  w.comment("hybridsens seed=0x1");
  w.row({"a", "b,c", "say \"hi\"", "line\nbreak"});
  w.row({"1", "", "3", "4"});
  CHECK(os.str().rfind("# hybridsens", 0) == 0);
  auto t = parse_csv(os.str());
  CHECK(t.header == std::vector<std::string>{"a", "b,c", "say \"hi\"", "line\nbreak"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][1].empty());
  CHECK(t.column("b,c") == 1);
  CHECK_THROWS(t.column("zzz"));
  CHECK_THROWS(parse_csv("a,\"b\n"));
}
