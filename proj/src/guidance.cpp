#include "adaor/guidance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "adaor/errors.hpp"

namespace adaor {

namespace {

void require_dims(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": prediction dims differ (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

const std::vector<double>& require_id(const PredictionSet& p, const char* what) {
  if (!p.eps_id) throw ContractError(std::string(what) + " needs the identity prediction");
  return *p.eps_id;
}

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1], got " + std::to_string(alpha));
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::cfg_sweep:
      return "cfg";
    case Variant::adaor:
      return "adaor";
    case Variant::cfg_id:
      return "cfgid";
    case Variant::adaor_analytic:
      return "adaor-analytic";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected adaor, cfg, cfgid, adaor-analytic)");
}

std::string_view scheduler_name(Scheduler s) { return s == Scheduler::sqrt ? "sqrt" : "linear"; }

Scheduler parse_scheduler(std::string_view name) {
  if (name == "sqrt") return Scheduler::sqrt;
  if (name == "linear") return Scheduler::linear;
  throw std::invalid_argument("unknown scheduler '" + std::string(name) + "' (expected sqrt or linear)");
}

void GuidanceConfig::validate() const {
  require_alpha(alpha);
  if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("guidance scale must be finite and >= 0");
}

double scheduler_eval(Scheduler kind, double alpha) {
  require_alpha(alpha);
  return kind == Scheduler::sqrt ? std::sqrt(alpha) : alpha;
}

std::vector<double> cfg_combine(const PredictionSet& p, double w) {
  require_dims(p.eps_cond, p.eps_null, "cfg_combine");
  std::vector<double> out(p.eps_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.eps_null[i] + w * (p.eps_cond[i] - p.eps_null[i]);
  return out;
}

std::vector<double> adaptive_origin(const PredictionSet& p, double alpha, Scheduler scheduler) {
  const auto& id = require_id(p, "adaptive_origin");
  require_dims(id, p.eps_null, "adaptive_origin");
  const double s = scheduler_eval(scheduler, alpha);
  std::vector<double> out(id.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * p.eps_null[i] + (1.0 - s) * id[i];
  return out;
}

std::vector<double> adaor_combine(const PredictionSet& p, const GuidanceConfig& cfg) {
  require_dims(p.eps_cond, p.eps_null, "adaor_combine");
  std::vector<double> out = adaptive_origin(p, cfg.alpha, cfg.scheduler);
  const double scale = cfg.alpha * cfg.w;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] + scale * (p.eps_cond[i] - p.eps_null[i]);
  return out;
}

std::vector<double> cfgid_combine(const PredictionSet& p, double w) {
  const auto& id = require_id(p, "cfgid_combine");
  require_dims(p.eps_cond, id, "cfgid_combine");
  std::vector<double> out(id.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = id[i] + w * (p.eps_cond[i] - id[i]);
  return out;
}

std::vector<double> guided_prediction(const PredictionSet& p, const GuidanceConfig& cfg) {
  cfg.validate();
  switch (cfg.variant) {
    case Variant::cfg_sweep:
      return cfg_combine(p, cfg.alpha * cfg.w);
    case Variant::cfg_id:
      return cfgid_combine(p, cfg.alpha * cfg.w);
    case Variant::adaor:
    case Variant::adaor_analytic:
      return adaor_combine(p, cfg);
  }
  throw ContractError("unhandled guidance variant");
}

std::vector<Instruction> network_instructions(Variant v, Instruction edit) {
  if (!is_edit(edit)) throw ContractError("guidance needs an edit instruction, got token id " + std::to_string(edit.id));
  switch (v) {
    case Variant::cfg_sweep:
    case Variant::adaor_analytic:
      return {edit, kNullToken};
    case Variant::adaor:
      return {edit, kNullToken, kIdentityToken};
    case Variant::cfg_id:
      return {edit, kIdentityToken};
  }
  throw ContractError("unhandled guidance variant");
}

PredictionSet resolve_predictions(const Predictor& net, const flow::LatentState& z, std::span<const double> source,
                                  Instruction edit, const GuidanceConfig& cfg) {
  const auto tokens = network_instructions(cfg.variant, edit);
  std::vector<PredictQuery> queries;
  for (Instruction tok : tokens) queries.push_back({z.z, source, tok, z.time.t()});
  const std::size_t d = net.dim();
  std::vector<double> out(queries.size() * d);
  net.predict_batch(queries, out);

  PredictionSet p;
  for (std::size_t q = 0; q < tokens.size(); ++q) {
    std::vector<double> row(out.begin() + q * d, out.begin() + (q + 1) * d);
    if (tokens[q] == edit) {
      p.eps_cond = std::move(row);
    } else if (tokens[q] == kNullToken) {
      p.eps_null = std::move(row);
    } else {
      p.eps_id = std::move(row);
    }
  }
  if (cfg.variant == Variant::adaor_analytic) p.eps_id = flow::analytical_id_prediction(z, source);
  return p;
}

}  // namespace adaor
