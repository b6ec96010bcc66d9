#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace magic {

/// Interleaved 8-bit raster, row-major, no padding.
template <int Channels>
struct Raster {
  static constexpr int channels = Channels;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * Channels, 0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("raster dimensions must be positive");
  }

  [[nodiscard]] bool empty() const { return width <= 0 || height <= 0; }
  [[nodiscard]] bool well_formed() const {
    return width > 0 && height > 0 &&
           data.size() == static_cast<std::size_t>(width) * height * Channels;
  }

  [[nodiscard]] std::span<std::uint8_t, Channels> at(int x, int y) {
    return std::span<std::uint8_t, Channels>(data.data() + offset(x, y), Channels);
  }
  [[nodiscard]] std::span<const std::uint8_t, Channels> at(int x, int y) const {
    return std::span<const std::uint8_t, Channels>(data.data() + offset(x, y), Channels);
  }

  bool operator==(const Raster&) const = default;

 private:
  [[nodiscard]] std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * Channels;
  }
};

using RasterRgb = Raster<3>;
using RasterRgba = Raster<4>;

RasterRgba to_rgba(const RasterRgb& rgb);
RasterRgb to_rgb(const RasterRgba& rgba);

/// Physical resolution written into the pHYs chunk.
struct PngOptions {
  int compression_level = 6;
  int dpi = 0;  // 0 = no pHYs chunk
};

std::string encode_png(const RasterRgb& raster, const PngOptions& options = {});
std::string encode_png(const RasterRgba& raster, const PngOptions& options = {});
RasterRgb decode_png_rgb(std::string_view bytes);
RasterRgba decode_png_rgba(std::string_view bytes);

void write_png(const std::filesystem::path& path, const RasterRgb& raster, const PngOptions& options = {});
void write_png(const std::filesystem::path& path, const RasterRgba& raster, const PngOptions& options = {});
RasterRgb read_png_rgb(const std::filesystem::path& path);
RasterRgba read_png_rgba(const std::filesystem::path& path);

/// Reads the pHYs chunk of an encoded PNG; returns 0 when absent.
int png_dpi(std::string_view bytes);

}  // namespace magic
