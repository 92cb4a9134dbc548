#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adaor/task.hpp"

namespace adaor::image {

/// Pixel layout and value range used to display one sample.
struct Layout {
  std::size_t width;
  std::size_t height;
  double lo;
  double hi;
};

/// disc: 16x16 over [0, 1]; vec: an 8x1 strip over [-3, 3].
Layout layout_for(TaskKind task);

inline constexpr std::size_t kUpscale = 8;
inline constexpr std::size_t kSeparator = 2;
inline constexpr std::uint8_t kSeparatorValue = 128;

/// Linear map of [lo, hi] to 0..255 with clamping and rounding.
std::vector<std::uint8_t> to_gray8(std::span<const double> x, double lo, double hi);

/// 8-bit grayscale PNG, no ancillary chunks.
std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height);

/// One sample as a PNG at native resolution.
std::vector<std::uint8_t> sample_png(std::span<const double> x, const Layout& layout);

/// Panels side by side, each upscaled by kUpscale (nearest neighbor), with
/// kSeparator-pixel gray columns between them.
std::vector<std::uint8_t> grid_png(const std::vector<std::vector<double>>& panels, const Layout& layout);

std::string base64(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace adaor::image
