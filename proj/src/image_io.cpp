#include "adaor/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "adaor/errors.hpp"

namespace adaor::image {

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_noop(png_structp) {}

}  // namespace

Layout layout_for(TaskKind task) {
  if (task == TaskKind::disc) return {disc::kSide, disc::kSide, 0.0, 1.0};
  return {vec::kDim, 1, -3.0, 3.0};
}

std::vector<std::uint8_t> to_gray8(std::span<const double> x, double lo, double hi) {
  if (!(hi > lo)) throw DomainError("to_gray8 needs hi > lo");
  std::vector<std::uint8_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = std::clamp((x[i] - lo) / (hi - lo), 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(u * 255.0));
  }
  return out;
}

std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || pixels.size() != width * height) {
    throw DimensionError("encode_png: " + std::to_string(pixels.size()) + " pixels for a " + std::to_string(width) +
                         "x" + std::to_string(height) + " image");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_const_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = pixels.data() + y * width;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<std::uint8_t> sample_png(std::span<const double> x, const Layout& layout) {
  return encode_png(to_gray8(x, layout.lo, layout.hi), layout.width, layout.height);
}

std::vector<std::uint8_t> grid_png(const std::vector<std::vector<double>>& panels, const Layout& layout) {
  if (panels.empty()) throw std::invalid_argument("grid_png needs at least one panel");
  const std::size_t pw = layout.width * kUpscale, ph = layout.height * kUpscale;
  const std::size_t n = panels.size();
  const std::size_t width = n * pw + (n - 1) * kSeparator;
  std::vector<std::uint8_t> px(width * ph, kSeparatorValue);
  for (std::size_t p = 0; p < n; ++p) {
    if (panels[p].size() != layout.width * layout.height) {
      throw DimensionError("grid_png: panel " + std::to_string(p) + " has " + std::to_string(panels[p].size()) +
                           " values");
    }
    const auto g = to_gray8(panels[p], layout.lo, layout.hi);
    const std::size_t x0 = p * (pw + kSeparator);
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t x = 0; x < pw; ++x) px[y * width + x0 + x] = g[(y / kUpscale) * layout.width + x / kUpscale];
  }
  return encode_png(px, width, ph);
}

std::string base64(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace adaor::image
