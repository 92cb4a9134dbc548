#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaor/guidance.hpp"
#include "adaor/model.hpp"

namespace adaor {

/// Any state coordinate beyond this magnitude counts as a diverged trajectory
/// (data lives in [0, 1] / [-3, 3], noise is unit Gaussian).
inline constexpr double kDivergenceBound = 1e4;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, double t, Variant variant, double alpha);
  int step() const { return step_; }
  double t() const { return t_; }
  Variant variant() const { return variant_; }
  double alpha() const { return alpha_; }

 private:
  int step_;
  double t_;
  Variant variant_;
  double alpha_;
};

struct SweepConfig {
  std::vector<double> alphas = uniform_alphas(6);
  int steps = flow::kDefaultSteps;
  std::uint64_t seed = 0;
  Variant variant = Variant::adaor;
  double w = kDefaultGuidanceScale;
  Scheduler scheduler = Scheduler::sqrt;

  /// count values spaced uniformly over [lo, hi].
  static std::vector<double> uniform_alphas(int count, double lo = 0.0, double hi = 1.0);
  /// Throws std::invalid_argument / DomainError on empty or out-of-range
  /// alphas, steps < 2 or a bad scale.
  void validate() const;
};

struct Sweep {
  Sample source;
  Instruction instruction;
  std::vector<double> alphas;
  std::vector<Sample> outputs;
  /// Max over steps of the guided prediction's L2 norm, per alpha.
  std::vector<double> max_pred_norm;
};

/// The shared N(0, I) starting point at t = 1 for a seed.
std::vector<double> initial_noise(std::uint64_t seed, std::size_t dim);

/// Deterministic Euler integration from t = 1 to t = 0 under one guidance
/// configuration. Throws DivergenceError when the state leaves the finite
/// range or exceeds kDivergenceBound.
Sample sample_one(const Predictor& net, std::span<const double> source, Instruction edit,
                  const GuidanceConfig& guidance, std::uint64_t seed, int steps = flow::kDefaultSteps,
                  double* max_pred_norm = nullptr);

/// One trajectory per alpha, all starting from the same noise draw, ordered
/// by ascending alpha. The network is queried once per step for every alpha
/// together.
Sweep sweep(const Predictor& net, std::span<const double> source, Instruction edit, const SweepConfig& cfg);

}  // namespace adaor
