#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaor/flow.hpp"
#include "adaor/ndcore.hpp"
#include "adaor/task.hpp"

namespace adaor {

inline constexpr std::size_t kEmbedDim = 16;
inline constexpr std::size_t kTimeDim = 8;
inline constexpr std::size_t kDepth = 3;

/// sin/cos of 2^k * pi * t for k = 0..3.
std::array<double, kTimeDim> time_embedding(double t);

/// One network query: predict the velocity at (z, t) for source c_I and instruction c_T.
struct PredictQuery {
  std::span<const double> z;
  std::span<const double> source;
  Instruction instruction;
  double t = 1.0;
};

/// Anything that maps queries to velocities. Implementations must be pure:
/// a row's output depends only on that row's query.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t dim() const = 0;
  /// Writes queries.size() * dim() values, one row per query.
  virtual void predict_batch(std::span<const PredictQuery> queries, std::span<double> out) const = 0;
};

/// Echo of the training run that produced a checkpoint.
struct TrainEcho {
  std::int64_t steps = 0;
  std::int64_t batch = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  double p_null = 0.0;
  double p_id = 0.0;
  bool operator==(const TrainEcho&) const = default;
};

struct ModelConfig {
  TaskKind task = TaskKind::vec;
  std::size_t dim = 0;
  std::size_t hidden = 0;

  std::size_t input_dim() const { return 2 * dim + kEmbedDim + kTimeDim; }
  static ModelConfig for_task(TaskKind task, std::optional<std::size_t> hidden = std::nullopt);
};

/// Conditional velocity network v(z_t, c_I, c_T, t): an MLP over
/// concat(z, c_I, embed(c_T), time_embedding(t)) with three SiLU hidden layers.
/// The MLP head estimates the clean sample x; predictions are returned as the
/// velocity (z - x_hat) / t.
class DenoiserNet final : public Predictor {
 public:
  /// Weights ~ N(0, 1/fan_in), biases 0, instruction embeddings ~ N(0, 0.02^2).
  static DenoiserNet init(std::uint64_t seed, TaskKind task, std::optional<std::size_t> hidden = std::nullopt);

  const ModelConfig& config() const { return cfg_; }
  std::size_t dim() const override { return cfg_.dim; }

  std::vector<double> predict(const flow::LatentState& state, std::span<const double> source,
                              Instruction instruction) const;
  void predict_batch(std::span<const PredictQuery> queries, std::span<double> out) const override;

  /// Records the forward pass for a batch on `g`; rows of z/source are items.
  /// Returns the clean-sample estimate, not the velocity.
  nd::Graph::Var forward(nd::Graph& g, const nd::Tensor& z, const nd::Tensor& source,
                         const std::vector<std::size_t>& tokens, std::span<const double> times);

  std::vector<nd::Parameter*> parameters();
  const std::vector<nd::Parameter>& parameter_tensors() const { return params_; }
  const nd::Parameter& embedding() const { return params_.front(); }
  std::size_t parameter_count() const;

  const TrainEcho& train_echo() const { return echo_; }
  void set_train_echo(const TrainEcho& echo) { echo_ = echo; }

  bool operator==(const DenoiserNet& other) const;

 private:
  friend DenoiserNet deserialize(std::span<const std::uint8_t> bytes);
  DenoiserNet() = default;
  void build_input(std::span<const PredictQuery> queries, std::vector<double>& input) const;

  ModelConfig cfg_;
  std::vector<nd::Parameter> params_;  // embedding, then (weight, bias) per layer
  TrainEcho echo_;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, BadHeader, ShapeMismatch, TrailingBytes };
  CheckpointError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::string_view kCheckpointMagic = "ADAOR1";

/// Layout: magic "ADAOR1", u32 LE header length, JSON header (task,
/// vocabulary, tensor names/shapes, training echo), then every parameter as
/// little-endian IEEE-754 binary64 in declaration order.
std::vector<std::uint8_t> serialize(const DenoiserNet& net);
DenoiserNet deserialize(std::span<const std::uint8_t> bytes);
void save(const DenoiserNet& net, const std::filesystem::path& path);
DenoiserNet load(const std::filesystem::path& path);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// FNV-1a 64 of the checkpoint bytes, as 16 hex digits.
std::string checkpoint_id(std::span<const std::uint8_t> bytes);

/// Gradient check of the flow-matching loss on a random batch drawn from `seed`.
nd::GradcheckResult gradcheck_denoiser(DenoiserNet& net, std::uint64_t seed, std::size_t batch = 4,
                                       std::size_t max_coords_per_tensor = 0);

}  // namespace adaor
