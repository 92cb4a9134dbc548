#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "adaor/rng.hpp"

namespace adaor {

/// One data item: flattened 16x16 image (disc) or 8-d parameter vector (vec).
using Sample = std::vector<double>;

/// Instruction token. Both tasks share the layout: four edit tokens, then
/// the reserved null and identity tokens.
struct Instruction {
  std::uint32_t id = 0;
  auto operator<=>(const Instruction&) const = default;
};

inline constexpr std::size_t kVocabSize = 6;
inline constexpr std::size_t kNumEdits = 4;
inline constexpr Instruction kNullToken{4};
inline constexpr Instruction kIdentityToken{5};

inline constexpr bool is_edit(Instruction i) { return i.id < kNumEdits; }

enum class TaskKind { vec, disc };

std::string_view task_name(TaskKind kind);
/// Throws std::invalid_argument for anything other than "vec" / "disc".
TaskKind parse_task(std::string_view name);

struct DiscParams {
  double cx = 6.0;
  double cy = 8.0;
  double r = 3.5;
  double b = 0.6;
  double hollow = 0.0;
  bool operator==(const DiscParams&) const = default;
};

namespace disc {

inline constexpr int kSide = 16;
inline constexpr std::size_t kDim = kSide * kSide;

inline constexpr Instruction kShiftRight{0};
inline constexpr Instruction kGrow{1};
inline constexpr Instruction kBrighten{2};
inline constexpr Instruction kHollow{3};

// Sampling ranges for source discs.
inline constexpr double kCxMin = 4.0, kCxMax = 8.0;
inline constexpr double kCyMin = 5.0, kCyMax = 11.0;
inline constexpr double kRMin = 2.5, kRMax = 4.5;
inline constexpr double kBMin = 0.4, kBMax = 0.8;

DiscParams sample_params(Rng& rng);

/// Anti-aliased disc: b * coverage, coverage a smoothstep over a one-pixel
/// band around the rim. A hollow fraction h carves an inner disc of radius
/// (1 - 0.4 h) r at depth h, so h = 1 is a full ring and h = 0 is solid.
Sample render(const DiscParams& p);

/// Ground-truth lambda-partial edit. Throws ContractError for NULL / ID.
DiscParams apply_edit(const DiscParams& p, Instruction edit, double lambda);

struct Fit {
  DiscParams params;
  double residual = 0.0;
};

/// Coarse-to-fine grid search for the disc closest (L2) to `image`. The
/// search box covers every parameter reachable by a full-strength edit; the
/// finest grid is 0.25 px for centers, 0.1 px radius, 0.02 intensity and 0.05
/// hollow.
Fit fit_params(std::span<const double> image);

}  // namespace disc

using VecParams = std::array<double, 8>;

namespace vec {

inline constexpr std::size_t kDim = 8;

inline constexpr Instruction kShift{0};
inline constexpr Instruction kScale{1};
inline constexpr Instruction kRotate{2};
inline constexpr Instruction kMirror{3};

VecParams sample_params(Rng& rng);
/// Full-strength affine map of one edit token.
VecParams full_edit(const VecParams& p, Instruction edit);
/// lerp(p, full_edit(p), lambda). Throws ContractError for NULL / ID.
VecParams apply_edit(const VecParams& p, Instruction edit, double lambda);
inline Sample render(const VecParams& p) { return Sample(p.begin(), p.end()); }

}  // namespace vec

struct EditTriplet {
  Sample source;
  Sample target;
  Instruction instruction;
};

/// A sampled source item together with its generating parameters.
struct Case {
  std::variant<DiscParams, VecParams> params;
  Sample source;
};

/// Task-agnostic front end over the disc and vec families.
class Task {
 public:
  explicit Task(TaskKind kind) : kind_(kind) {}

  TaskKind kind() const { return kind_; }
  std::string_view name() const { return task_name(kind_); }
  std::size_t dim() const;
  /// Token names indexed by id, including NULL and ID.
  const std::array<std::string_view, kVocabSize>& vocabulary() const;
  std::array<Instruction, kNumEdits> edit_instructions() const;
  /// Case-insensitive lookup; throws std::invalid_argument listing the vocabulary.
  Instruction instruction_by_name(std::string_view name) const;
  std::string_view instruction_name(Instruction i) const;

  Case sample_case(Rng& rng) const;
  /// The evaluation case addressed by a case seed (CLI --case-seed, service case_seed).
  Case case_from_seed(std::uint64_t case_seed) const;
  /// Ground-truth lambda-partial edit of a case, rendered.
  Sample partial_edit(const Case& c, Instruction edit, double lambda) const;
  /// Training triplet; the instruction is drawn uniformly from the edit
  /// tokens when absent. ID yields target == source.
  EditTriplet make_triplet(Rng& rng, std::optional<Instruction> instruction = std::nullopt) const;

 private:
  TaskKind kind_;
};

}  // namespace adaor
