#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "adaor/model.hpp"
#include "adaor/ndcore.hpp"
#include "adaor/task.hpp"

namespace adaor {

/// Per-item condition mixing: drop the instruction with p_null, substitute
/// the identity pair with p_id, keep the edit triplet otherwise.
struct MixConfig {
  double p_null = 0.10;
  double p_id = 0.10;
  /// Throws std::invalid_argument unless both are >= 0 and sum to <= 1.
  void validate() const;
};

struct TrainConfig {
  TaskKind task = TaskKind::vec;
  std::int64_t steps = 5000;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  MixConfig mix;
  std::optional<std::size_t> hidden;

  /// 5,000 steps for vec, 30,000 for disc.
  static TrainConfig defaults(TaskKind task);
  void validate() const;
};

/// Null drop keeps the edited target (the "any edit" marginal); identity
/// substitution sets target = source and instruction = ID.
EditTriplet mix_triplet(EditTriplet triplet, Rng& rng, const MixConfig& cfg);

/// Draws the mixed training batch for one step. Item i of step s uses its
/// own sub-stream derived from (seed, s, i).
std::vector<EditTriplet> make_batch(const Task& task, const TrainConfig& cfg, std::int64_t step);

/// One flow-matching step: noise the targets, regress eps - target from
/// (z_t, source, instruction, t), apply Adam. Returns the batch loss.
/// Throws NonFiniteError naming the step when the loss is NaN/Inf.
double train_step(DenoiserNet& net, nd::AdamState& opt, std::span<const EditTriplet> batch, Rng& rng,
                  std::int64_t step_index);

struct TrainResult {
  DenoiserNet net;
  std::vector<double> losses;
};

/// Seed that train() passes to DenoiserNet::init.
std::uint64_t init_seed(const TrainConfig& cfg);

using ProgressFn = std::function<void(std::int64_t step, double loss)>;

TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {});

/// `step,loss` CSV, preceded by `#` lines echoing the config.
void write_loss_csv(const std::filesystem::path& path, const TrainConfig& cfg, std::span<const double> losses);

}  // namespace adaor
