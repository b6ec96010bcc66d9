#pragma once

#include <filesystem>
#include <string>

#include "magic/domain.hpp"

namespace magic::compositor {

/// Pixel box covered by the plan: the axis-aligned bounds of the rotated patch
/// rectangle (width = scale * scene_w, height = width / patch_aspect, centred
/// on the anchor). A pixel belongs to the box when its centre lies in the
/// half-open interval [min, max) on both axes. Not clamped.
BBox plan_to_bbox(const DeploymentPlan& plan, int scene_w, int scene_h, double patch_aspect);

/// sin and cos of an angle in degrees, exact at multiples of 90.
std::pair<double, double> sin_cos_deg(double degrees);

enum class Resample { bilinear, nearest };

/// Pastes the patch into the scene: scaled, rotated about its centre and
/// alpha-blended. Only pixels inside plan.bbox can change. Throws
/// std::invalid_argument when the plan's bbox is stale or leaves the scene.
SceneImage composite(const SceneImage& scene, const Patch& patch, const DeploymentPlan& plan,
                     Resample resample = Resample::bilinear);

/// Fixed-point bilinear resize (weights in 1/256 steps, round-half-even).
RasterRgba resize(const RasterRgba& src, int width, int height, Resample resample = Resample::bilinear);

/// round(width_mm / 25.4 * dpi).
int print_width_px(double width_mm, int dpi);

struct PrintFiles {
  std::filesystem::path png;
  std::filesystem::path pdf;
  int width_px = 0;
  int height_px = 0;
  bool resampled = false;
};

/// Writes <name>_<dpi>dpi_<mm>mm.png (with physical resolution) and a
/// single-page PDF of the same size. dpi must be in [72, 1200] and width_mm in
/// (0, 2000].
PrintFiles export_print(const Patch& patch, int dpi, double width_mm,
                        const std::filesystem::path& out_dir, const std::string& name);

/// Minimal single-page PDF embedding the raster at the given physical size.
std::string make_pdf(const RasterRgba& raster, double width_mm, double height_mm);

}  // namespace magic::compositor
