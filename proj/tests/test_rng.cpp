#include <doctest.h>

#include <cmath>
#include <set>

#include "adaor/rng.hpp"

using adaor::Rng;

TEST_SUITE("rng") {
  TEST_CASE("same seed, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("derive_seed separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(adaor::derive_seed(0, 1, i));
    CHECK(seen.size() == 1000);
    CHECK(adaor::derive_seed(0, 1, 2) != adaor::derive_seed(0, 2, 1));
  }

  TEST_CASE("uniform and below stay in range") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(r.below(7) < 7u);
    }
  }

  TEST_CASE("normal has unit moments") {
    Rng r(5);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
  }
}
