#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaor/sampler.hpp"
#include "adaor/task.hpp"

namespace adaor {

enum class EmbeddingKind { pixel, randproj };

/// Stand-in for a perceptual embedding. PIXEL is the identity on flattened
/// samples; RANDPROJ is a fixed 64 x D Gaussian projection (rows N(0, 1/D),
/// seed 1234).
class Embedding {
 public:
  static constexpr std::size_t kProjDim = 64;
  static constexpr std::uint64_t kProjSeed = 1234;

  static Embedding pixel() { return Embedding(EmbeddingKind::pixel, 0); }
  static Embedding randproj(std::size_t dim);

  EmbeddingKind kind() const { return kind_; }
  std::vector<double> operator()(std::span<const double> x) const;
  std::vector<std::vector<double>> embed_all(const std::vector<Sample>& xs) const;

 private:
  Embedding(EmbeddingKind kind, std::size_t dim) : kind_(kind), dim_(dim) {}
  EmbeddingKind kind_;
  std::size_t dim_;
  std::vector<double> proj_;
};

std::string_view embedding_name(EmbeddingKind kind);
EmbeddingKind parse_embedding(std::string_view name);

/// S_i = |E(o_{i+1}) - E(o_i)|. Throws std::invalid_argument for < 2 outputs.
std::vector<double> stepwise_distances(const std::vector<Sample>& outputs, const Embedding& emb);
/// Population std(S) / mean(S); NaN when mean(S) <= 1e-12. Needs >= 3 outputs.
double linearity_cv(const std::vector<Sample>& outputs, const Embedding& emb);
/// Mean second-difference norm over mean step; NaN when the mean step is
/// <= 1e-12. Needs >= 3 outputs.
double delta_smooth(const std::vector<Sample>& outputs, const Embedding& emb);
/// Mean over nonzero steps of cos(step, dir_text), divided by
/// cos(global, dir_text). NaN if every step is zero length. Throws
/// DomainError for a zero text or global direction, or when the two are
/// orthogonal.
double normalized_dir(const std::vector<Sample>& outputs, std::span<const double> dir_text, const Embedding& emb);
/// Mean over nonzero steps of cos(step, global). Throws DomainError for a
/// zero global direction.
double traj_consistency(const std::vector<Sample>& outputs, const Embedding& emb);

/// Unit-norm mean of E(full edit) - E(source) over m seeded cases (m >= 16).
std::vector<double> text_direction_proxy(const Task& task, Instruction edit, const Embedding& emb, std::size_t m,
                                         std::uint64_t seed = 0);

struct MetricsReport {
  double delta_smooth = 0.0;
  double linearity_cv = 0.0;
  double norm_dir = 0.0;
  double traj_consistency = 0.0;
  double mean_step = 0.0;
  /// Distance to the best parametric re-render, per output (disc only).
  std::vector<double> manifold_residual_per_alpha;
  /// Reasons for NaN fields, empty for a healthy report.
  std::vector<std::string> flags;

  double mean_residual() const;
};

/// All four metrics for one sweep. A trajectory that does not move yields a
/// NaN report with a "zero trajectory" flag instead of an error.
MetricsReport evaluate_sweep(const Sweep& sweep, TaskKind task, const Embedding& emb,
                             std::span<const double> dir_text);

/// `case_id,variant,scheduler,w,alpha_count,delta_smooth,linearity_cv,norm_dir,traj_consistency,mean_step,mean_residual`
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& case_id, Variant variant, Scheduler scheduler, double w,
                            std::size_t alpha_count, const MetricsReport& report);
/// Shortest round-trip formatting used by every CSV and JSON writer; NaN is "nan".
std::string format_number(double v);

}  // namespace adaor
