#pragma once

#include <span>
#include <vector>

#include "adaor/task.hpp"

namespace adaor::flow {

/// Time on the rectified-flow path. The noise scale equals t.
class TimePoint {
 public:
  /// Throws DomainError unless 0 < t <= 1.
  explicit TimePoint(double t);
  double t() const { return t_; }
  double sigma() const { return t_; }

 private:
  double t_;
};

struct LatentState {
  std::vector<double> z;
  TimePoint time;
};

/// z_t = (1 - t) x + t eps.
LatentState noise_forward(std::span<const double> x, TimePoint t, std::span<const double> eps);

/// Regression target eps - x; the time derivative of noise_forward.
std::vector<double> velocity_target(std::span<const double> x, std::span<const double> eps);

/// (z - c_I) / sigma_t: the velocity of a conditional that keeps the input
/// unchanged. Exact when z was produced by noise_forward(c_I, t, eps).
std::vector<double> analytical_id_prediction(std::span<const double> z, double t,
                                             std::span<const double> source);
std::vector<double> analytical_id_prediction(const LatentState& state, std::span<const double> source);

inline constexpr int kDefaultSteps = 64;

/// K+1 uniform points from 1 down to 0. Throws DomainError for K < 2.
std::vector<double> timestep_grid(int steps);

}  // namespace adaor::flow
