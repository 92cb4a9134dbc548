#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adaor/flow.hpp"
#include "adaor/model.hpp"
#include "adaor/task.hpp"

namespace adaor {

/// Guidance variants.
///  - cfg_sweep: standard CFG, edit intensity alpha mapped to scale alpha * w.
///  - adaor: adaptive-origin guidance with the learned identity prediction.
///  - cfg_id: CFG with the identity prediction as origin, scale alpha * w.
///  - adaor_analytic: adaor with the identity prediction replaced by (z - c_I) / t.
enum class Variant { cfg_sweep, adaor, cfg_id, adaor_analytic };
enum class Scheduler { sqrt, linear };

inline constexpr double kDefaultGuidanceScale = 4.0;
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::cfg_sweep, Variant::adaor, Variant::cfg_id,
                                                        Variant::adaor_analytic};

/// "cfg", "adaor", "cfgid", "adaor-analytic".
std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
/// "sqrt", "linear".
std::string_view scheduler_name(Scheduler s);
Scheduler parse_scheduler(std::string_view name);

struct GuidanceConfig {
  Variant variant = Variant::adaor;
  double w = kDefaultGuidanceScale;
  double alpha = 1.0;
  Scheduler scheduler = Scheduler::sqrt;
  /// Throws DomainError unless alpha in [0, 1] and w >= 0 (both finite).
  void validate() const;
};

struct PredictionSet {
  std::vector<double> eps_cond;
  std::vector<double> eps_null;
  std::optional<std::vector<double>> eps_id;
};

/// s(alpha): sqrt or identity. Throws DomainError outside [0, 1].
double scheduler_eval(Scheduler kind, double alpha);

/// eps_null + w (eps_cond - eps_null)
std::vector<double> cfg_combine(const PredictionSet& p, double w);
/// s(alpha) eps_null + (1 - s(alpha)) eps_id
std::vector<double> adaptive_origin(const PredictionSet& p, double alpha, Scheduler scheduler);
/// O(alpha) + alpha w (eps_cond - eps_null). Reduces to eps_id at alpha = 0
/// and to cfg_combine(p, w) at alpha = 1.
std::vector<double> adaor_combine(const PredictionSet& p, const GuidanceConfig& cfg);
/// eps_id + w (eps_cond - eps_id)
std::vector<double> cfgid_combine(const PredictionSet& p, double w);

/// The guided velocity of cfg.variant at edit strength cfg.alpha.
std::vector<double> guided_prediction(const PredictionSet& p, const GuidanceConfig& cfg);

/// Instructions the variant sends through the network, in the order
/// (cond, null, id). adaor_analytic does not query ID.
std::vector<Instruction> network_instructions(Variant v, Instruction edit);

/// Evaluates exactly the predictions `cfg.variant` needs, in one batch.
PredictionSet resolve_predictions(const Predictor& net, const flow::LatentState& z, std::span<const double> source,
                                  Instruction edit, const GuidanceConfig& cfg);

}  // namespace adaor
