#include <doctest.h>

#include <cmath>
#include <vector>

#include "adaor/errors.hpp"
#include "adaor/flow.hpp"
#include "adaor/rng.hpp"

using namespace adaor;
using namespace adaor::flow;

namespace {
double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}
}  // namespace

TEST_SUITE("flow") {
  TEST_CASE("noise_forward examples") {
    const std::vector<double> x{2.0, -1.0}, eps{0.5, 3.0};
    CHECK(noise_forward(x, TimePoint(1.0), eps).z == eps);
    const auto near0 = noise_forward(x, TimePoint(1e-12), eps).z;
    CHECK(near0[0] == doctest::Approx(2.0));
    CHECK(noise_forward(std::vector<double>{2.0}, TimePoint(0.5), std::vector<double>{0.0}).z ==
          std::vector<double>{1.0});
    CHECK_THROWS_AS(noise_forward(x, TimePoint(0.5), std::vector<double>{1.0}), DimensionError);
  }

  TEST_CASE("TimePoint domain") {
    CHECK_THROWS_AS(TimePoint(0.0), DomainError);
    CHECK_THROWS_AS(TimePoint(1.5), DomainError);
    CHECK(TimePoint(0.25).sigma() == 0.25);
  }

  TEST_CASE("velocity_target examples") {
    const std::vector<double> x{0.3, 0.7};
    CHECK(velocity_target(x, x) == std::vector<double>{0.0, 0.0});
    CHECK(velocity_target(std::vector<double>{0.0}, std::vector<double>{1.0}) == std::vector<double>{1.0});
    CHECK_THROWS_AS(velocity_target(x, std::vector<double>{1.0}), DimensionError);
  }

  TEST_CASE("z_t + (1 - t) v == eps and dz/dt == v") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> x(5), eps(5);
      for (auto& v : x) v = rng.normal();
      for (auto& v : eps) v = rng.normal();
      const double t = rng.uniform(0.01, 1.0);
      const auto z = noise_forward(x, TimePoint(t), eps).z;
      const auto v = velocity_target(x, eps);
      for (int i = 0; i < 5; ++i) CHECK(z[i] + (1 - t) * v[i] == doctest::Approx(eps[i]).epsilon(1e-12));
      const double h = 1e-6;
      const auto zp = noise_forward(x, TimePoint(std::min(1.0, t + h)), eps).z;
      const auto zm = noise_forward(x, TimePoint(std::max(1e-9, t - h)), eps).z;
      const double dt = std::min(1.0, t + h) - std::max(1e-9, t - h);
      for (int i = 0; i < 5; ++i) CHECK((zp[i] - zm[i]) / dt == doctest::Approx(v[i]).epsilon(1e-6));
    }
  }

  TEST_CASE("analytical_id_prediction examples") {
    const std::vector<double> c{0.2, -0.4, 0.9}, eps{1.0, 0.5, -2.0};
    for (double t : {0.1, 0.5, 1.0}) {
      const auto z = noise_forward(c, TimePoint(t), eps);
      const auto v = analytical_id_prediction(z, c);
      for (int i = 0; i < 3; ++i) CHECK(v[i] == doctest::Approx(eps[i] - c[i]).epsilon(1e-12));
    }
    CHECK(analytical_id_prediction(c, 0.5, c) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(analytical_id_prediction(std::vector<double>{1.0}, 0.1, std::vector<double>{0.0})[0] ==
          doctest::Approx(10.0).epsilon(1e-14));
    CHECK(analytical_id_prediction(std::vector<double>{1.0}, 0.05, std::vector<double>{0.0})[0] ==
          doctest::Approx(20.0).epsilon(1e-14));
    CHECK_THROWS_AS(analytical_id_prediction(c, 0.0, c), DomainError);
    CHECK_THROWS_AS(analytical_id_prediction(c, -0.5, c), DomainError);
  }

  TEST_CASE("divergence law |v| t == |z - c|") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> z(8), c(8), d(8);
      for (auto& v : z) v = rng.normal();
      for (auto& v : c) v = rng.uniform();
      for (int i = 0; i < 8; ++i) d[i] = z[i] - c[i];
      const double t = rng.uniform(1e-3, 1.0);
      CHECK(std::abs(norm(analytical_id_prediction(z, t, c)) * t - norm(d)) < 1e-9);
    }
  }

  TEST_CASE("analytical prediction is the posterior-mean velocity (Monte Carlo)") {
    // One coordinate, c_I = 0.4, t = 0.5: bin z_t and compare the mean of
    // eps - c_I within each bin to (z_bin - c_I) / t.
    Rng rng(17);
    const double c = 0.4, t = 0.5;
    const int bins = 20, n = 200000;
    std::vector<double> sum_v(bins), sum_z(bins);
    std::vector<int> count(bins);
    for (int i = 0; i < n; ++i) {
      const double eps = rng.normal();
      const double z = (1 - t) * c + t * eps;
      const int b = static_cast<int>(std::floor((z + 1.0) / 2.5 * bins));
      if (b < 0 || b >= bins) continue;
      sum_v[b] += eps - c;
      sum_z[b] += z;
      ++count[b];
    }
    for (int b = 0; b < bins; ++b) {
      if (count[b] < 2000) continue;
      const double zbar = sum_z[b] / count[b];
      CHECK(sum_v[b] / count[b] == doctest::Approx((zbar - c) / t).epsilon(0.02));
    }
  }

  TEST_CASE("timestep_grid") {
    CHECK(timestep_grid(2) == std::vector<double>{1.0, 0.5, 0.0});
    const auto g4 = timestep_grid(4);
    for (int i = 0; i < 4; ++i) CHECK(g4[i] - g4[i + 1] == doctest::Approx(0.25));
    CHECK(timestep_grid(kDefaultSteps).size() == 65);
    CHECK(kDefaultSteps == 64);
    CHECK_THROWS_AS(timestep_grid(1), DomainError);
  }
}
