#include "adaor/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adaor/errors.hpp"
#include "adaor/rng.hpp"

namespace adaor {

namespace {

constexpr std::uint64_t kInitialNoiseStream = 0x2015E;

std::string divergence_message(int step, double t, Variant variant, double alpha) {
  std::ostringstream os;
  os << "sampling diverged at step " << step << " (t=" << t << ") under variant " << variant_name(variant)
     << " with alpha=" << alpha;
  return os.str();
}

struct Trajectories {
  std::vector<std::vector<double>> states;
  std::vector<double> max_norm;
};

// Integrates one trajectory per guidance config from the same starting point.
Trajectories integrate(const Predictor& net, std::span<const double> source, Instruction edit,
                       std::span<const GuidanceConfig> configs, const std::vector<double>& z0, int steps) {
  const std::size_t d = net.dim();
  if (source.size() != d) {
    throw DimensionError("sampler: source dim " + std::to_string(source.size()) + " does not match network dim " +
                         std::to_string(d));
  }
  for (const auto& c : configs) c.validate();
  const auto grid = flow::timestep_grid(steps);

  Trajectories tr{std::vector<std::vector<double>>(configs.size(), z0), std::vector<double>(configs.size(), 0.0)};
  std::vector<std::vector<Instruction>> tokens;
  std::size_t rows = 0;
  for (const auto& c : configs) {
    tokens.push_back(network_instructions(c.variant, edit));
    rows += tokens.back().size();
  }
  std::vector<PredictQuery> queries(rows);
  std::vector<double> out(rows * d);

  for (int k = 0; k < steps; ++k) {
    const double t = grid[k];
    const double dt = grid[k] - grid[k + 1];
    std::size_t row = 0;
    for (std::size_t a = 0; a < configs.size(); ++a)
      for (Instruction tok : tokens[a]) queries[row++] = {tr.states[a], source, tok, t};
    net.predict_batch(queries, out);

    row = 0;
    for (std::size_t a = 0; a < configs.size(); ++a) {
      PredictionSet p;
      for (Instruction tok : tokens[a]) {
        std::vector<double> v(out.begin() + row * d, out.begin() + (row + 1) * d);
        ++row;
        if (tok == edit) {
          p.eps_cond = std::move(v);
        } else if (tok == kNullToken) {
          p.eps_null = std::move(v);
        } else {
          p.eps_id = std::move(v);
        }
      }
      if (configs[a].variant == Variant::adaor_analytic) {
        p.eps_id = flow::analytical_id_prediction(tr.states[a], t, source);
      }
      const std::vector<double> v = guided_prediction(p, configs[a]);
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (!std::isfinite(norm)) throw DivergenceError(k, t, configs[a].variant, configs[a].alpha);
      tr.max_norm[a] = std::max(tr.max_norm[a], norm);

      auto& z = tr.states[a];
      for (std::size_t i = 0; i < d; ++i) {
        z[i] -= dt * v[i];
        if (!std::isfinite(z[i]) || std::abs(z[i]) > kDivergenceBound) {
          throw DivergenceError(k, t, configs[a].variant, configs[a].alpha);
        }
      }
    }
  }
  return tr;
}

}  // namespace

DivergenceError::DivergenceError(int step, double t, Variant variant, double alpha)
    : std::runtime_error(divergence_message(step, t, variant, alpha)),
      step_(step),
      t_(t),
      variant_(variant),
      alpha_(alpha) {}

std::vector<double> SweepConfig::uniform_alphas(int count, double lo, double hi) {
  if (count < 1) throw std::invalid_argument("alpha count must be >= 1");
  std::vector<double> a(static_cast<std::size_t>(count));
  if (count == 1) {
    a[0] = lo;
    return a;
  }
  for (int i = 0; i < count; ++i) a[i] = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
  a.back() = hi;
  return a;
}

void SweepConfig::validate() const {
  if (alphas.empty()) throw std::invalid_argument("alphas must not be empty");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw DomainError("alphas must lie in [0, 1]");
  }
  if (steps < 2) throw DomainError("steps must be >= 2");
  GuidanceConfig{variant, w, 0.0, scheduler}.validate();
}

std::vector<double> initial_noise(std::uint64_t seed, std::size_t dim) {
  Rng rng(derive_seed(seed, kInitialNoiseStream));
  std::vector<double> z(dim);
  for (double& v : z) v = rng.normal();
  return z;
}

Sample sample_one(const Predictor& net, std::span<const double> source, Instruction edit,
                  const GuidanceConfig& guidance, std::uint64_t seed, int steps, double* max_pred_norm) {
  const auto z0 = initial_noise(seed, net.dim());
  auto tr = integrate(net, source, edit, std::span(&guidance, 1), z0, steps);
  if (max_pred_norm) *max_pred_norm = tr.max_norm[0];
  return std::move(tr.states[0]);
}

Sweep sweep(const Predictor& net, std::span<const double> source, Instruction edit, const SweepConfig& cfg) {
  cfg.validate();
  std::vector<double> alphas = cfg.alphas;
  std::sort(alphas.begin(), alphas.end());
  std::vector<GuidanceConfig> configs;
  for (double a : alphas) configs.push_back({cfg.variant, cfg.w, a, cfg.scheduler});
  const auto z0 = initial_noise(cfg.seed, net.dim());
  auto tr = integrate(net, source, edit, configs, z0, cfg.steps);
  Sweep s;
  s.source.assign(source.begin(), source.end());
  s.instruction = edit;
  s.alphas = std::move(alphas);
  s.outputs = std::move(tr.states);
  s.max_pred_norm = std::move(tr.max_norm);
  return s;
}

}  // namespace adaor
