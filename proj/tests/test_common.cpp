#include <doctest.h>

#include <cmath>
#include <set>

#include "deltalab/common.hpp"

using namespace deltalab;

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(derive_seed(7, 1)), b(derive_seed(7, 1)), c(derive_seed(7, 2));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    seen.insert(c.next_u64());
  }
  CHECK(seen.size() == 100);
  CHECK(derive_seed(7, 1) != derive_seed(8, 1));
}

TEST_CASE("uniform draws lie in [0, 1) and have the right mean") {
  Rng rng(3);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // Standard error of the mean is sqrt(1/12/n) ~ 6.5e-4.
  CHECK(std::abs(sum / n - 0.5) < 4e-3);
}

TEST_CASE("below covers its range uniformly") {
  Rng rng(11);
  const int k = 7, n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) ++counts[rng.below(k)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / k) * (c - n / k) / double(n / k);
  // 6 degrees of freedom; the 0.999 quantile is 22.46.
  CHECK(chi2 < 22.46);
  CHECK_THROWS_AS(rng.below(0), Error);
}

TEST_CASE("sigmoid is stable at extreme arguments") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
  CHECK(sigmoid(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  CHECK(sigmoid(-3.0) + sigmoid(3.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("vector helpers") {
  const Vec a{1, 2, 3}, b{4, -5, 6};
  CHECK(dot(a, b) == 12.0);
  CHECK(squared_norm(a) == 14.0);
  CHECK(squared_distance(a, b) == 9.0 + 49.0 + 9.0);
  Vec y{1, 1, 1};
  axpy(2.0, a, y);
  CHECK(y == Vec{3, 5, 7});
}

TEST_CASE("hash_doubles is order sensitive and bit exact") {
  const Vec a{1.0, 2.0}, b{2.0, 1.0};
  CHECK(hash_doubles(a) == hash_doubles(Vec{1.0, 2.0}));
  CHECK(hash_doubles(a) != hash_doubles(b));
  CHECK(hash_doubles(Vec{0.1 + 0.2}) != hash_doubles(Vec{0.3}));
}
