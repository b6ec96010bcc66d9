#include "magic/compositor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include <zlib.h>

#include "magic/util.hpp"

namespace magic::compositor {

std::pair<double, double> sin_cos_deg(double degrees) {
  const double r = std::fmod(degrees, 360.0);
  if (r == 0.0) return {0.0, 1.0};
  if (r == 90.0 || r == -270.0) return {1.0, 0.0};
  if (r == 180.0 || r == -180.0) return {0.0, -1.0};
  if (r == 270.0 || r == -90.0) return {-1.0, 0.0};
  const double rad = degrees * std::numbers::pi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

namespace {

struct Footprint {
  double cx, cy;   // centre in scene pixels
  double w, h;     // unrotated patch size in scene pixels
  double s, c;     // sin, cos of the rotation
};

Footprint footprint(const DeploymentPlan& plan, int scene_w, int scene_h, double patch_aspect) {
  Footprint f;
  f.w = plan.scale * scene_w;
  f.h = f.w / patch_aspect;
  f.cx = plan.anchor_x * scene_w;
  f.cy = plan.anchor_y * scene_h;
  std::tie(f.s, f.c) = sin_cos_deg(plan.rotation_deg);
  return f;
}

int pixel_lo(double v) { return static_cast<int>(std::ceil(v - 0.5)); }

// num / den rounded to nearest, ties to even. num >= 0, den > 0.
inline std::uint32_t div_half_even(std::uint64_t num, std::uint64_t den) {
  const std::uint64_t q = num / den;
  const std::uint64_t r = num % den;
  if (2 * r > den || (2 * r == den && (q & 1))) return static_cast<std::uint32_t>(q + 1);
  return static_cast<std::uint32_t>(q);
}

// Fraction in [0, 1] to a weight in 0..256, ties to even.
inline int weight256(double frac) { return static_cast<int>(std::nearbyint(frac * 256.0)); }

// Samples src at continuous position (sx, sy) in source pixel units, where
// pixel i covers [i, i+1).
std::array<std::uint8_t, 4> sample(const RasterRgba& src, double sx, double sy, Resample mode) {
  std::array<std::uint8_t, 4> out{};
  if (mode == Resample::nearest) {
    const int ix = std::clamp(static_cast<int>(std::floor(sx)), 0, src.width - 1);
    const int iy = std::clamp(static_cast<int>(std::floor(sy)), 0, src.height - 1);
    const auto p = src.at(ix, iy);
    std::copy(p.begin(), p.end(), out.begin());
    return out;
  }
  const double fx = sx - 0.5;
  const double fy = sy - 0.5;
  const double flx = std::floor(fx);
  const double fly = std::floor(fy);
  const int wx = weight256(fx - flx);
  const int wy = weight256(fy - fly);
  const int x0 = std::clamp(static_cast<int>(flx), 0, src.width - 1);
  const int y0 = std::clamp(static_cast<int>(fly), 0, src.height - 1);
  const int x1 = std::clamp(static_cast<int>(flx) + 1, 0, src.width - 1);
  const int y1 = std::clamp(static_cast<int>(fly) + 1, 0, src.height - 1);
  const auto p00 = src.at(x0, y0), p10 = src.at(x1, y0), p01 = src.at(x0, y1), p11 = src.at(x1, y1);
  const std::uint64_t w00 = static_cast<std::uint64_t>(256 - wx) * (256 - wy);
  const std::uint64_t w10 = static_cast<std::uint64_t>(wx) * (256 - wy);
  const std::uint64_t w01 = static_cast<std::uint64_t>(256 - wx) * wy;
  const std::uint64_t w11 = static_cast<std::uint64_t>(wx) * wy;
  for (int k = 0; k < 4; ++k) {
    const std::uint64_t acc = p00[k] * w00 + p10[k] * w10 + p01[k] * w01 + p11[k] * w11;
    out[k] = static_cast<std::uint8_t>(div_half_even(acc, 65536));
  }
  return out;
}

}  // namespace

BBox plan_to_bbox(const DeploymentPlan& plan, int scene_w, int scene_h, double patch_aspect) {
  const Footprint f = footprint(plan, scene_w, scene_h, patch_aspect);
  const double ext_w = std::abs(f.w * f.c) + std::abs(f.h * f.s);
  const double ext_h = std::abs(f.w * f.s) + std::abs(f.h * f.c);
  const int x0 = pixel_lo(f.cx - ext_w / 2.0);
  const int x1 = pixel_lo(f.cx + ext_w / 2.0);
  const int y0 = pixel_lo(f.cy - ext_h / 2.0);
  const int y1 = pixel_lo(f.cy + ext_h / 2.0);
  return {x0, y0, x1 - x0, y1 - y0};
}

SceneImage composite(const SceneImage& scene, const Patch& patch, const DeploymentPlan& plan,
                     Resample resample) {
  if (!scene.pixels.well_formed() || !patch.pixels.well_formed()) {
    throw std::invalid_argument("composite needs a well-formed scene and patch");
  }
  const double aspect = static_cast<double>(patch.pixels.width) / patch.pixels.height;
  const BBox box = plan_to_bbox(plan, scene.width(), scene.height(), aspect);
  if (box != plan.bbox) throw std::invalid_argument("plan bbox does not match its placement");
  if (!box.inside(scene.width(), scene.height())) {
    throw std::invalid_argument("plan bbox leaves the scene");
  }

  SceneImage out = scene;
  out.id = scene.id + "+patch";
  const Footprint f = footprint(plan, scene.width(), scene.height(), aspect);
  const double pw = patch.pixels.width;
  const double ph = patch.pixels.height;

  for (int y = box.y; y < box.bottom(); ++y) {
    for (int x = box.x; x < box.right(); ++x) {
      const double dx = (x + 0.5) - f.cx;
      const double dy = (y + 0.5) - f.cy;
      // Inverse rotation into the patch frame (image y axis points down).
      const double u = dx * f.c + dy * f.s + f.w / 2.0;
      const double v = -dx * f.s + dy * f.c + f.h / 2.0;
      if (u < 0.0 || v < 0.0 || u >= f.w || v >= f.h) continue;
      const auto p = sample(patch.pixels, u * pw / f.w, v * ph / f.h, resample);
      const std::uint32_t a = p[3];
      if (a == 0) continue;
      auto s = out.pixels.at(x, y);
      for (int k = 0; k < 3; ++k) {
        s[k] = static_cast<std::uint8_t>(div_half_even(std::uint64_t{p[k]} * a + std::uint64_t{s[k]} * (255 - a), 255));
      }
    }
  }
  return out;
}

RasterRgba resize(const RasterRgba& src, int width, int height, Resample resample) {
  if (width == src.width && height == src.height) return src;
  RasterRgba out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double sx = (x + 0.5) * src.width / width;
      const double sy = (y + 0.5) * src.height / height;
      const auto p = sample(src, sx, sy, resample);
      std::copy(p.begin(), p.end(), out.at(x, y).begin());
    }
  }
  return out;
}

int print_width_px(double width_mm, int dpi) {
  return static_cast<int>(std::llround(width_mm / 25.4 * dpi));
}

namespace {

std::string mm_label(double mm) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", mm);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::string deflate(const std::string& raw) {
  uLongf len = compressBound(raw.size());
  std::string out(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(out.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                raw.size(), 6) != Z_OK) {
    throw std::runtime_error("zlib compression failed");
  }
  out.resize(len);
  return out;
}

}  // namespace

std::string make_pdf(const RasterRgba& raster, double width_mm, double height_mm) {
  std::string rgb, alpha;
  rgb.reserve(static_cast<std::size_t>(raster.width) * raster.height * 3);
  bool opaque = true;
  for (std::size_t i = 0; i < raster.data.size(); i += 4) {
    rgb.append(reinterpret_cast<const char*>(&raster.data[i]), 3);
    alpha.push_back(static_cast<char>(raster.data[i + 3]));
    opaque = opaque && raster.data[i + 3] == 255;
  }
  const double wpt = width_mm / 25.4 * 72.0;
  const double hpt = height_mm / 25.4 * 72.0;
  char dims[96];
  std::snprintf(dims, sizeof dims, "%.3f %.3f", wpt, hpt);

  std::vector<std::string> objects;
  objects.push_back("<< /Type /Catalog /Pages 2 0 R >>");
  objects.push_back("<< /Type /Pages /Kids [3 0 R] /Count 1 >>");
  objects.push_back(std::string("<< /Type /Page /Parent 2 0 R /MediaBox [0 0 ") + dims +
                    "] /Resources << /XObject << /Im0 5 0 R >> >> /Contents 4 0 R >>");
  char content[160];
  std::snprintf(content, sizeof content, "q %.3f 0 0 %.3f 0 0 cm /Im0 Do Q", wpt, hpt);
  objects.push_back("<< /Length " + std::to_string(std::strlen(content)) + " >>\nstream\n" + content +
                    "\nendstream");
  auto image_object = [&](const std::string& pixels, const char* colorspace, const std::string& extra) {
    const std::string z = deflate(pixels);
    return "<< /Type /XObject /Subtype /Image /Width " + std::to_string(raster.width) + " /Height " +
           std::to_string(raster.height) + " /ColorSpace " + colorspace +
           " /BitsPerComponent 8 /Filter /FlateDecode" + extra + " /Length " + std::to_string(z.size()) +
           " >>\nstream\n" + z + "\nendstream";
  };
  objects.push_back(image_object(rgb, "/DeviceRGB", opaque ? "" : " /SMask 6 0 R"));
  if (!opaque) objects.push_back(image_object(alpha, "/DeviceGray", ""));

  std::string pdf = "%PDF-1.4\n%\xE2\xE3\xCF\xD3\n";
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    offsets.push_back(pdf.size());
    pdf += std::to_string(i + 1) + " 0 obj\n" + objects[i] + "\nendobj\n";
  }
  const std::size_t xref = pdf.size();
  pdf += "xref\n0 " + std::to_string(objects.size() + 1) + "\n0000000000 65535 f \n";
  for (auto off : offsets) {
    char line[24];
    std::snprintf(line, sizeof line, "%010zu 00000 n \n", off);
    pdf += line;
  }
  pdf += "trailer\n<< /Size " + std::to_string(objects.size() + 1) + " /Root 1 0 R >>\nstartxref\n" +
         std::to_string(xref) + "\n%%EOF\n";
  return pdf;
}

PrintFiles export_print(const Patch& patch, int dpi, double width_mm, const std::filesystem::path& out_dir,
                        const std::string& name) {
  if (dpi < 72 || dpi > 1200) throw std::invalid_argument("dpi must be in [72, 1200]");
  if (!(width_mm > 0.0)) throw std::invalid_argument("width_mm must be positive");
  if (width_mm > 2000.0) throw std::invalid_argument("width_mm above 2000 mm is not printable");
  if (!patch.pixels.well_formed()) throw std::invalid_argument("patch has no pixels");

  PrintFiles files;
  files.width_px = print_width_px(width_mm, dpi);
  if (files.width_px < 1) throw std::invalid_argument("print width is below one pixel");
  files.height_px = static_cast<int>(
      std::llround(static_cast<double>(files.width_px) * patch.pixels.height / patch.pixels.width));
  files.resampled = files.width_px != patch.pixels.width || files.height_px != patch.pixels.height;
  const RasterRgba pixels = resize(patch.pixels, files.width_px, files.height_px);

  std::filesystem::create_directories(out_dir);
  const std::string stem = name + "_" + std::to_string(dpi) + "dpi_" + mm_label(width_mm) + "mm";
  files.png = out_dir / (stem + ".png");
  files.pdf = out_dir / (stem + ".pdf");
  write_png(files.png, pixels, {6, dpi});
  const double height_mm = width_mm * files.height_px / files.width_px;
  write_text_atomic(files.pdf, make_pdf(pixels, width_mm, height_mm));
  return files;
}

}  // namespace magic::compositor
