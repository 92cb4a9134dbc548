#include "adaor/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "adaor/errors.hpp"
#include "adaor/rng.hpp"

namespace adaor {

namespace {

constexpr double kTiny = 1e-12;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kTextDirStream = 0x7E47;

using Points = std::vector<std::vector<double>>;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> diff(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

void require_points(const Points& e, std::size_t n, const char* what) {
  if (e.size() < n) {
    throw std::invalid_argument(std::string(what) + " needs at least " + std::to_string(n) + " outputs, got " +
                                std::to_string(e.size()));
  }
  for (const auto& p : e) {
    if (p.size() != e.front().size()) throw DimensionError(std::string(what) + ": outputs differ in size");
  }
}

std::vector<double> steps_of(const Points& e) {
  std::vector<double> s;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) s.push_back(norm(diff(e[i + 1], e[i])));
  return s;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double cv_points(const Points& e) {
  require_points(e, 3, "linearity_cv");
  const auto s = steps_of(e);
  const double mu = mean(s);
  if (mu <= kTiny) return kNaN;
  double var = 0.0;
  for (double x : s) var += (x - mu) * (x - mu);
  return std::sqrt(var / s.size()) / mu;
}

double smooth_points(const Points& e) {
  require_points(e, 3, "delta_smooth");
  const double mu = mean(steps_of(e));
  if (mu <= kTiny) return kNaN;
  double acc = 0.0;
  for (std::size_t i = 1; i + 1 < e.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < e[i].size(); ++j) {
      const double d2 = e[i + 1][j] - 2.0 * e[i][j] + e[i - 1][j];
      s += d2 * d2;
    }
    acc += std::sqrt(s);
  }
  return acc / static_cast<double>(e.size() - 2) / mu;
}

// Mean cosine of every nonzero step against `ref`, or NaN if all steps vanish.
double mean_step_cosine(const Points& e, std::span<const double> ref) {
  const double ref_norm = norm(ref);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    const auto step = diff(e[i + 1], e[i]);
    const double sn = norm(step);
    if (sn < kTiny) continue;
    acc += dot(step, ref) / (sn * ref_norm);
    ++n;
  }
  return n == 0 ? kNaN : acc / static_cast<double>(n);
}

double norm_dir_points(const Points& e, std::span<const double> dir_text) {
  require_points(e, 2, "normalized_dir");
  if (dir_text.size() != e.front().size()) {
    throw DimensionError("normalized_dir: text direction has " + std::to_string(dir_text.size()) +
                         " entries, embeddings have " + std::to_string(e.front().size()));
  }
  const double tn = norm(dir_text);
  if (tn < kTiny) throw DomainError("normalized_dir: zero text direction");
  const auto global = diff(e.back(), e.front());
  const double gn = norm(global);
  if (gn < kTiny) throw DomainError("normalized_dir: zero global direction");
  const double denom = dot(global, dir_text) / (gn * tn);
  if (std::abs(denom) < kTiny) throw DomainError("normalized_dir: global direction is orthogonal to the text direction");
  return mean_step_cosine(e, dir_text) / denom;
}

double consistency_points(const Points& e) {
  require_points(e, 2, "traj_consistency");
  const auto global = diff(e.back(), e.front());
  if (norm(global) < kTiny) throw DomainError("traj_consistency: zero global direction");
  return mean_step_cosine(e, global);
}

}  // namespace

Embedding Embedding::randproj(std::size_t dim) {
  if (dim == 0) throw DimensionError("randproj embedding needs dim >= 1");
  Embedding e(EmbeddingKind::randproj, dim);
  Rng rng(kProjSeed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  e.proj_.resize(kProjDim * dim);
  for (double& v : e.proj_) v = rng.normal() * scale;
  return e;
}

std::vector<double> Embedding::operator()(std::span<const double> x) const {
  if (kind_ == EmbeddingKind::pixel) return {x.begin(), x.end()};
  if (x.size() != dim_) {
    throw DimensionError("randproj embedding expects dim " + std::to_string(dim_) + ", got " +
                         std::to_string(x.size()));
  }
  std::vector<double> out(kProjDim);
  for (std::size_t r = 0; r < kProjDim; ++r) out[r] = dot({proj_.data() + r * dim_, dim_}, x);
  return out;
}

std::vector<std::vector<double>> Embedding::embed_all(const std::vector<Sample>& xs) const {
  std::vector<std::vector<double>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back((*this)(x));
  return out;
}

std::string_view embedding_name(EmbeddingKind kind) { return kind == EmbeddingKind::pixel ? "pixel" : "randproj"; }

EmbeddingKind parse_embedding(std::string_view name) {
  if (name == "pixel") return EmbeddingKind::pixel;
  if (name == "randproj") return EmbeddingKind::randproj;
  throw std::invalid_argument("unknown embedding '" + std::string(name) + "' (expected pixel or randproj)");
}

std::vector<double> stepwise_distances(const std::vector<Sample>& outputs, const Embedding& emb) {
  const auto e = emb.embed_all(outputs);
  require_points(e, 2, "stepwise_distances");
  return steps_of(e);
}

double linearity_cv(const std::vector<Sample>& outputs, const Embedding& emb) {
  return cv_points(emb.embed_all(outputs));
}

double delta_smooth(const std::vector<Sample>& outputs, const Embedding& emb) {
  return smooth_points(emb.embed_all(outputs));
}

double normalized_dir(const std::vector<Sample>& outputs, std::span<const double> dir_text, const Embedding& emb) {
  return norm_dir_points(emb.embed_all(outputs), dir_text);
}

double traj_consistency(const std::vector<Sample>& outputs, const Embedding& emb) {
  return consistency_points(emb.embed_all(outputs));
}

std::vector<double> text_direction_proxy(const Task& task, Instruction edit, const Embedding& emb, std::size_t m,
                                         std::uint64_t seed) {
  if (!is_edit(edit)) throw ContractError("text_direction_proxy needs an edit instruction");
  if (m < 16) throw std::invalid_argument("text_direction_proxy needs at least 16 cases");
  std::vector<double> acc;
  for (std::size_t i = 0; i < m; ++i) {
    Rng rng(derive_seed(seed, kTextDirStream, edit.id, i));
    const Case c = task.sample_case(rng);
    const auto d = diff(emb(task.partial_edit(c, edit, 1.0)), emb(c.source));
    if (acc.empty()) acc.assign(d.size(), 0.0);
    for (std::size_t j = 0; j < d.size(); ++j) acc[j] += d[j];
  }
  const double n = norm(acc);
  if (n < kTiny) throw DomainError("text_direction_proxy: edit leaves the embedding unchanged");
  for (double& v : acc) v /= n;
  return acc;
}

double MetricsReport::mean_residual() const {
  if (manifold_residual_per_alpha.empty()) return kNaN;
  return mean(manifold_residual_per_alpha);
}

MetricsReport evaluate_sweep(const Sweep& sweep, TaskKind task, const Embedding& emb,
                             std::span<const double> dir_text) {
  const auto e = emb.embed_all(sweep.outputs);
  require_points(e, 3, "evaluate_sweep");
  MetricsReport r;
  r.mean_step = mean(steps_of(e));
  if (task == TaskKind::disc) {
    for (const auto& o : sweep.outputs) r.manifold_residual_per_alpha.push_back(disc::fit_params(o).residual);
  }
  if (r.mean_step <= kTiny || norm(diff(e.back(), e.front())) < kTiny) {
    r.delta_smooth = r.linearity_cv = r.norm_dir = r.traj_consistency = kNaN;
    r.flags.push_back("zero trajectory");
    return r;
  }
  r.delta_smooth = smooth_points(e);
  r.linearity_cv = cv_points(e);
  r.norm_dir = norm_dir_points(e, dir_text);
  r.traj_consistency = consistency_points(e);
  return r;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv_header() {
  return "case_id,variant,scheduler,w,alpha_count,delta_smooth,linearity_cv,norm_dir,traj_consistency,mean_step,"
         "mean_residual";
}

std::string metrics_csv_row(const std::string& case_id, Variant variant, Scheduler scheduler, double w,
                            std::size_t alpha_count, const MetricsReport& r) {
  std::string row = case_id;
  row += ",";
  row += variant_name(variant);
  row += ",";
  row += scheduler_name(scheduler);
  for (double v : {w, static_cast<double>(alpha_count), r.delta_smooth, r.linearity_cv, r.norm_dir,
                   r.traj_consistency, r.mean_step, r.mean_residual()}) {
    row += "," + format_number(v);
  }
  return row;
}

}  // namespace adaor
