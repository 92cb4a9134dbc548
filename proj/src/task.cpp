#include "adaor/task.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "adaor/errors.hpp"

namespace adaor {

namespace {

constexpr std::array<std::string_view, kVocabSize> kDiscVocab = {"SHIFT_RIGHT", "GROW", "BRIGHTEN",
                                                                 "HOLLOW",      "NULL", "ID"};
constexpr std::array<std::string_view, kVocabSize> kVecVocab = {"SHIFT", "SCALE", "ROTATE",
                                                                "MIRROR", "NULL", "ID"};

constexpr VecParams kShiftOffset = {0.8, -0.6, 0.5, -0.3, 0.7, -0.4, 0.6, -0.5};
constexpr double kScaleFactor = 1.6;

void require_edit(Instruction edit) {
  if (!is_edit(edit)) {
    throw ContractError("apply_edit needs an edit token, got reserved token id " + std::to_string(edit.id));
  }
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double disc_coverage(double dist, double radius) { return 1.0 - smoothstep(radius - 0.5, radius + 0.5, dist); }

// Unit-intensity shape; render() is b * shape.
void render_shape(double cx, double cy, double r, double hollow, double* out) {
  const double r_in = (1.0 - 0.4 * hollow) * r;
  for (int y = 0; y < disc::kSide; ++y) {
    for (int x = 0; x < disc::kSide; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      double cov = disc_coverage(d, r);
      if (hollow > 0.0) cov -= hollow * disc_coverage(d, r_in);
      out[y * disc::kSide + x] = cov;
    }
  }
}

// Fit search box (every parameter reachable by a full-strength edit) and
// finest grid spacing.
struct Axis {
  double lo;
  double step;
  int count;
  double at(int i) const { return lo + step * i; }
};
constexpr Axis kFitCx{4.0, 0.25, 33};      // [4, 12]
constexpr Axis kFitCy{5.0, 0.25, 25};      // [5, 11]
constexpr Axis kFitR{2.5, 0.1, 48};        // [2.5, 7.2]
constexpr Axis kFitB{0.4, 0.02, 31};       // [0.4, 1.0]
constexpr Axis kFitHollow{0.0, 0.05, 21};  // [0, 1]

}  // namespace

std::string_view task_name(TaskKind kind) { return kind == TaskKind::disc ? "disc" : "vec"; }

TaskKind parse_task(std::string_view name) {
  if (name == "disc") return TaskKind::disc;
  if (name == "vec") return TaskKind::vec;
  throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected vec or disc)");
}

// ---------------------------------------------------------------- disc

namespace disc {

DiscParams sample_params(Rng& rng) {
  DiscParams p;
  p.cx = rng.uniform(kCxMin, kCxMax);
  p.cy = rng.uniform(kCyMin, kCyMax);
  p.r = rng.uniform(kRMin, kRMax);
  p.b = rng.uniform(kBMin, kBMax);
  p.hollow = 0.0;
  return p;
}

Sample render(const DiscParams& p) {
  Sample img(kDim);
  render_shape(p.cx, p.cy, p.r, p.hollow, img.data());
  for (double& v : img) v = std::clamp(p.b * v, 0.0, 1.0);
  return img;
}

DiscParams apply_edit(const DiscParams& p, Instruction edit, double lambda) {
  require_edit(edit);
  DiscParams q = p;
  switch (edit.id) {
    case kShiftRight.id:
      q.cx += 4.0 * lambda;
      break;
    case kGrow.id:
      q.r *= 1.0 + 0.6 * lambda;
      break;
    case kBrighten.id:
      q.b = std::min(1.0, q.b + 0.4 * lambda);
      break;
    case kHollow.id:
      q.hollow = lambda;
      break;
  }
  return q;
}

Fit fit_params(std::span<const double> image) {
  if (image.size() != kDim) {
    throw DimensionError("fit_params expects " + std::to_string(kDim) + " pixels, got " +
                         std::to_string(image.size()));
  }
  double image_sq = 0.0;
  for (double v : image) image_sq += v * v;

  struct Best {
    int cx = 0, cy = 0, r = 0, h = 0, b = 0;
    double err = std::numeric_limits<double>::infinity();
  } best;

  std::array<double, kDim> shape{};
  auto consider = [&](int icx, int icy, int ir, int ih) {
    render_shape(kFitCx.at(icx), kFitCy.at(icy), kFitR.at(ir), kFitHollow.at(ih), shape.data());
    double dot = 0.0, norm_sq = 0.0;
    for (std::size_t i = 0; i < kDim; ++i) {
      dot += image[i] * shape[i];
      norm_sq += shape[i] * shape[i];
    }
    // The residual is quadratic in b, so the best grid value is the grid
    // point nearest the clamped continuous optimum.
    const double b_opt = norm_sq > 0.0 ? dot / norm_sq : 0.0;
    const int ib = std::clamp(static_cast<int>(std::lround((b_opt - kFitB.lo) / kFitB.step)), 0,
                              kFitB.count - 1);
    const double b = kFitB.at(ib);
    const double err = image_sq - 2.0 * b * dot + b * b * norm_sq;
    if (err < best.err) best = {icx, icy, ir, ih, ib, err};
  };

  auto sweep = [&](int step, int radius, bool full) {
    auto range = [&](int center, const Axis& axis, int& lo, int& hi) {
      if (full) {
        lo = 0;
        hi = axis.count - 1;
      } else {
        lo = std::max(0, center - radius * step);
        hi = std::min(axis.count - 1, center + radius * step);
      }
    };
    int cx0, cx1, cy0, cy1, r0, r1, h0, h1;
    const Best c = best;
    range(c.cx, kFitCx, cx0, cx1);
    range(c.cy, kFitCy, cy0, cy1);
    range(c.r, kFitR, r0, r1);
    range(c.h, kFitHollow, h0, h1);
    auto axis_values = [&](int lo, int hi, int count) {
      std::vector<int> v;
      for (int i = lo; i <= hi; i += step) v.push_back(i);
      if (full && v.back() != count - 1) v.push_back(count - 1);
      return v;
    };
    for (int icx : axis_values(cx0, cx1, kFitCx.count))
      for (int icy : axis_values(cy0, cy1, kFitCy.count))
        for (int ir : axis_values(r0, r1, kFitR.count))
          for (int ih : axis_values(h0, h1, kFitHollow.count)) consider(icx, icy, ir, ih);
  };

  sweep(4, 0, true);
  sweep(2, 2, false);
  // Descend on the finest grid until no point within two cells improves.
  for (double prev = std::numeric_limits<double>::infinity(); best.err < prev;) {
    prev = best.err;
    sweep(1, 2, false);
  }

  Fit fit;
  fit.params = {kFitCx.at(best.cx), kFitCy.at(best.cy), kFitR.at(best.r), kFitB.at(best.b),
                kFitHollow.at(best.h)};
  const Sample rendered = render(fit.params);
  double res = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) res += (image[i] - rendered[i]) * (image[i] - rendered[i]);
  fit.residual = std::sqrt(res);
  return fit;
}

}  // namespace disc

// ---------------------------------------------------------------- vec

namespace vec {

VecParams sample_params(Rng& rng) {
  VecParams p{};
  for (double& v : p) v = rng.uniform(-1.0, 1.0);
  return p;
}

VecParams full_edit(const VecParams& p, Instruction edit) {
  require_edit(edit);
  VecParams q = p;
  switch (edit.id) {
    case kShift.id:
      for (std::size_t i = 0; i < kDim; ++i) q[i] = p[i] + kShiftOffset[i];
      break;
    case kScale.id:
      for (std::size_t i = 0; i < kDim; ++i) q[i] = kScaleFactor * p[i];
      break;
    case kRotate.id:
      // Quarter turn in each coordinate pair.
      for (std::size_t i = 0; i < kDim; i += 2) {
        q[i] = -p[i + 1];
        q[i + 1] = p[i];
      }
      break;
    case kMirror.id:
      for (std::size_t i = 0; i < kDim; ++i) q[i] = p[kDim - 1 - i];
      break;
  }
  return q;
}

VecParams apply_edit(const VecParams& p, Instruction edit, double lambda) {
  const VecParams full = full_edit(p, edit);
  VecParams q{};
  for (std::size_t i = 0; i < kDim; ++i) q[i] = (1.0 - lambda) * p[i] + lambda * full[i];
  return q;
}

}  // namespace vec

// ---------------------------------------------------------------- Task

std::size_t Task::dim() const { return kind_ == TaskKind::disc ? disc::kDim : vec::kDim; }

const std::array<std::string_view, kVocabSize>& Task::vocabulary() const {
  return kind_ == TaskKind::disc ? kDiscVocab : kVecVocab;
}

std::array<Instruction, kNumEdits> Task::edit_instructions() const {
  return {Instruction{0}, Instruction{1}, Instruction{2}, Instruction{3}};
}

Instruction Task::instruction_by_name(std::string_view name) const {
  std::string upper(name);
  for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  const auto& vocab = vocabulary();
  for (std::uint32_t i = 0; i < kVocabSize; ++i) {
    if (vocab[i] == upper) return Instruction{i};
  }
  std::string msg = "unknown instruction '" + std::string(name) + "'; available:";
  for (auto v : vocab) msg += " " + std::string(v);
  throw std::invalid_argument(msg);
}

std::string_view Task::instruction_name(Instruction i) const {
  if (i.id >= kVocabSize) throw std::invalid_argument("instruction id out of range");
  return vocabulary()[i.id];
}

Case Task::sample_case(Rng& rng) const {
  if (kind_ == TaskKind::disc) {
    const DiscParams p = disc::sample_params(rng);
    return Case{p, disc::render(p)};
  }
  const VecParams p = vec::sample_params(rng);
  return Case{p, vec::render(p)};
}

Case Task::case_from_seed(std::uint64_t case_seed) const {
  Rng rng(derive_seed(case_seed, 0xCA5E));
  return sample_case(rng);
}

Sample Task::partial_edit(const Case& c, Instruction edit, double lambda) const {
  if (const auto* dp = std::get_if<DiscParams>(&c.params)) {
    return disc::render(disc::apply_edit(*dp, edit, lambda));
  }
  return vec::render(vec::apply_edit(std::get<VecParams>(c.params), edit, lambda));
}

EditTriplet Task::make_triplet(Rng& rng, std::optional<Instruction> instruction) const {
  if (instruction && instruction->id >= kVocabSize) throw ContractError("instruction id out of range");
  if (instruction && *instruction == kNullToken) {
    throw ContractError("make_triplet: NULL has no ground-truth target");
  }
  const Instruction instr = instruction ? *instruction : Instruction{static_cast<std::uint32_t>(rng.below(kNumEdits))};
  Case c = sample_case(rng);
  EditTriplet t;
  t.instruction = instr;
  t.target = instr == kIdentityToken ? c.source : partial_edit(c, instr, 1.0);
  t.source = std::move(c.source);
  return t;
}

}  // namespace adaor
