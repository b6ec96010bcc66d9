#include "magic/raster.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace magic {

RasterRgba to_rgba(const RasterRgb& rgb) {
  RasterRgba out(rgb.width, rgb.height);
  const std::size_t n = static_cast<std::size_t>(rgb.width) * rgb.height;
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(&out.data[i * 4], &rgb.data[i * 3], 3);
    out.data[i * 4 + 3] = 255;
  }
  return out;
}

RasterRgb to_rgb(const RasterRgba& rgba) {
  RasterRgb out(rgba.width, rgba.height);
  const std::size_t n = static_cast<std::size_t>(rgba.width) * rgba.height;
  for (std::size_t i = 0; i < n; ++i) std::memcpy(&out.data[i * 3], &rgba.data[i * 4], 3);
  return out;
}

namespace {

struct WriteSink {
  std::string bytes;
};

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
  sink->bytes.append(reinterpret_cast<const char*>(data), length);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp, png_const_charp message) {
  throw std::runtime_error(std::string("png: ") + message);
}

void warning_callback(png_structp, png_const_charp) {}

std::string encode(const std::uint8_t* pixels, int width, int height, int channels,
                   const PngOptions& options) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback,
                                            warning_callback);
  if (!png) throw std::runtime_error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  WriteSink sink;
  try {
    png_set_write_fn(png, &sink, write_callback, flush_callback);
    png_set_IHDR(png, info, width, height, 8,
                 channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, options.compression_level);
    // Filter selection costs more than it saves at the fastest levels.
    if (options.compression_level <= 1) png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    if (options.dpi > 0) {
      const auto ppm = static_cast<png_uint_32>(std::lround(options.dpi / 0.0254));
      png_set_pHYs(png, info, ppm, ppm, PNG_RESOLUTION_METER);
    }
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(pixels + y * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return std::move(sink.bytes);
}

template <int Channels>
Raster<Channels> decode(std::string_view bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw std::runtime_error(std::string("png decode: ") + image.message);
  }
  image.format = Channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  Raster<Channels> out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error(std::string("png decode: ") + image.message);
  }
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

}  // namespace

std::string encode_png(const RasterRgb& raster, const PngOptions& options) {
  return encode(raster.data.data(), raster.width, raster.height, 3, options);
}

std::string encode_png(const RasterRgba& raster, const PngOptions& options) {
  return encode(raster.data.data(), raster.width, raster.height, 4, options);
}

RasterRgb decode_png_rgb(std::string_view bytes) { return decode<3>(bytes); }
RasterRgba decode_png_rgba(std::string_view bytes) { return decode<4>(bytes); }

void write_png(const std::filesystem::path& path, const RasterRgb& raster, const PngOptions& options) {
  spit(path, encode_png(raster, options));
}

void write_png(const std::filesystem::path& path, const RasterRgba& raster, const PngOptions& options) {
  spit(path, encode_png(raster, options));
}

RasterRgb read_png_rgb(const std::filesystem::path& path) { return decode_png_rgb(slurp(path)); }
RasterRgba read_png_rgba(const std::filesystem::path& path) { return decode_png_rgba(slurp(path)); }

int png_dpi(std::string_view bytes) {
  // Walk the chunk list; pHYs precedes IDAT.
  std::size_t pos = 8;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = be32(p + pos);
    const std::string_view type(bytes.data() + pos + 4, 4);
    if (type == "pHYs" && len == 9 && pos + 8 + 9 <= bytes.size()) {
      const std::uint32_t ppm = be32(p + pos + 8);
      if (p[pos + 16] != PNG_RESOLUTION_METER) return 0;
      return static_cast<int>(std::lround(ppm * 0.0254));
    }
    if (type == "IDAT") break;
    pos += 12 + static_cast<std::size_t>(len);
  }
  return 0;
}

}  // namespace magic
