#include "adaor/flow.hpp"

#include <cmath>
#include <string>

#include "adaor/errors.hpp"

namespace adaor::flow {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace

TimePoint::TimePoint(double t) : t_(t) {
  if (!(t > 0.0 && t <= 1.0)) throw DomainError("time must lie in (0, 1], got " + std::to_string(t));
}

LatentState noise_forward(std::span<const double> x, TimePoint t, std::span<const double> eps) {
  require_same(x.size(), eps.size(), "noise_forward");
  LatentState s{std::vector<double>(x.size()), t};
  const double tt = t.t();
  for (std::size_t i = 0; i < x.size(); ++i) s.z[i] = (1.0 - tt) * x[i] + tt * eps[i];
  return s;
}

std::vector<double> velocity_target(std::span<const double> x, std::span<const double> eps) {
  require_same(x.size(), eps.size(), "velocity_target");
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = eps[i] - x[i];
  return v;
}

std::vector<double> analytical_id_prediction(std::span<const double> z, double t,
                                             std::span<const double> source) {
  if (!(t > 0.0)) throw DomainError("analytical identity prediction needs t > 0, got " + std::to_string(t));
  require_same(z.size(), source.size(), "analytical_id_prediction");
  std::vector<double> v(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) v[i] = (z[i] - source[i]) / t;
  return v;
}

std::vector<double> analytical_id_prediction(const LatentState& state, std::span<const double> source) {
  return analytical_id_prediction(state.z, state.time.sigma(), source);
}

std::vector<double> timestep_grid(int steps) {
  if (steps < 2) throw DomainError("timestep grid needs at least 2 steps, got " + std::to_string(steps));
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) grid[i] = static_cast<double>(steps - i) / steps;
  return grid;
}

}  // namespace adaor::flow
