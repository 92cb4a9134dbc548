#include "adaor/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "adaor/errors.hpp"
#include "adaor/flow.hpp"

namespace adaor {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kItemStream = 0x17E5;
constexpr std::uint64_t kNoiseStream = 0x4015E;

}  // namespace

void MixConfig::validate() const {
  if (!(p_null >= 0.0) || !(p_id >= 0.0) || p_null + p_id > 1.0) {
    throw std::invalid_argument("mix probabilities need p_null, p_id >= 0 and p_null + p_id <= 1");
  }
}

TrainConfig TrainConfig::defaults(TaskKind task) {
  TrainConfig cfg;
  cfg.task = task;
  cfg.steps = task == TaskKind::disc ? 30000 : 5000;
  return cfg;
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be finite and >= 0");
  mix.validate();
}

EditTriplet mix_triplet(EditTriplet triplet, Rng& rng, const MixConfig& cfg) {
  if (!is_edit(triplet.instruction)) throw ContractError("mix_triplet expects an edit triplet");
  const double u = rng.uniform();
  if (u < cfg.p_null) {
    triplet.instruction = kNullToken;
  } else if (u < cfg.p_null + cfg.p_id) {
    triplet.instruction = kIdentityToken;
    triplet.target = triplet.source;
  }
  return triplet;
}

std::vector<EditTriplet> make_batch(const Task& task, const TrainConfig& cfg, std::int64_t step) {
  std::vector<EditTriplet> batch;
  batch.reserve(cfg.batch);
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    Rng rng(derive_seed(cfg.seed, kItemStream, static_cast<std::uint64_t>(step), i));
    batch.push_back(mix_triplet(task.make_triplet(rng), rng, cfg.mix));
  }
  return batch;
}

double train_step(DenoiserNet& net, nd::AdamState& opt, std::span<const EditTriplet> batch, Rng& rng,
                  std::int64_t step_index) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a nonempty batch");
  const std::size_t d = net.dim(), n = batch.size();
  nd::Tensor z({n, d}), src({n, d}), target({n, d});
  std::vector<std::size_t> tokens(n);
  std::vector<double> times(n);
  std::vector<double> eps(d);
  for (std::size_t i = 0; i < n; ++i) {
    const EditTriplet& item = batch[i];
    if (item.source.size() != d || item.target.size() != d) {
      throw DimensionError("train_step: triplet dim does not match the network");
    }
    const flow::TimePoint t(1.0 - rng.uniform());
    for (double& e : eps) e = rng.normal();
    const flow::LatentState zt = flow::noise_forward(item.target, t, eps);
    std::copy(zt.z.begin(), zt.z.end(), z.raw() + i * d);
    std::copy(item.source.begin(), item.source.end(), src.raw() + i * d);
    std::copy(item.target.begin(), item.target.end(), target.raw() + i * d);
    tokens[i] = item.instruction.id;
    times[i] = t.t();
  }

  auto params = net.parameters();
  for (auto* p : params) p->zero_grad();
  nd::Graph g;
  const nd::Graph::Var loss = g.mse_loss(net.forward(g, z, src, tokens, times), g.input(std::move(target)));
  const double value = g.value(loss)[0];
  if (!std::isfinite(value)) throw NonFiniteError("non-finite loss at step " + std::to_string(step_index));
  g.backward(loss);
  opt.step(params);
  return value;
}

std::uint64_t init_seed(const TrainConfig& cfg) { return derive_seed(cfg.seed, kInitStream); }

TrainResult train(const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const Task task(cfg.task);
  TrainResult result{DenoiserNet::init(init_seed(cfg), cfg.task, cfg.hidden), {}};
  auto params = result.net.parameters();
  nd::AdamState opt(params, {.lr = cfg.lr});
  result.losses.reserve(static_cast<std::size_t>(cfg.steps));
  for (std::int64_t s = 0; s < cfg.steps; ++s) {
    const auto batch = make_batch(task, cfg, s);
    Rng noise(derive_seed(cfg.seed, kNoiseStream, static_cast<std::uint64_t>(s)));
    const double loss = train_step(result.net, opt, batch, noise, s);
    result.losses.push_back(loss);
    if (progress) progress(s, loss);
  }
  result.net.set_train_echo({cfg.steps, static_cast<std::int64_t>(cfg.batch), cfg.lr, cfg.seed, cfg.mix.p_null,
                             cfg.mix.p_id});
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const TrainConfig& cfg, std::span<const double> losses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# task=" << task_name(cfg.task) << " steps=" << cfg.steps << " batch=" << cfg.batch << " lr=" << cfg.lr
      << " seed=" << cfg.seed << " p_null=" << cfg.mix.p_null << " p_id=" << cfg.mix.p_id << "\n";
  out << "step,loss\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << "," << losses[i] << "\n";
}

}  // namespace adaor
