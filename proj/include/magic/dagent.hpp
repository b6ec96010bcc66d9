#pragma once

#include <string>
#include <vector>

#include "magic/agent_io.hpp"
#include "magic/domain.hpp"

namespace magic::dagent {

/// Segment label to surface kind and facing.
class SurfaceTable {
 public:
  explicit SurfaceTable(const json& doc);
  static SurfaceTable load(const AssetStore& assets);

  /// Exact (case-insensitive) label first, then the longest key contained in
  /// the label; unmatched labels are other/unknown.
  [[nodiscard]] std::pair<SurfaceKind, Facing> lookup(const std::string& label) const;

 private:
  std::vector<std::pair<std::string, std::pair<SurfaceKind, Facing>>> entries_;
};

/// Regions from the segmenter, re-indexed 1..n and annotated with surface kind
/// and facing. Throws std::runtime_error("no deployable regions") when empty.
std::vector<Region> catalog_regions(const SceneImage& scene, Segmenter& segmenter,
                                    const SurfaceTable& table);

/// Placement bounds checked by validate_plan.
struct PlanLimits {
  double scale_min = 0.02;
  double scale_max = 0.5;
  double rotation_max_deg = 45.0;
};

/// Every violated placement constraint, in a fixed order. Empty means valid.
std::vector<std::string> validate_plan(const DeploymentPlan& plan, int scene_w, int scene_h,
                                       double patch_aspect, const std::vector<Region>& regions,
                                       const PlanLimits& limits = {});

/// Fills plan.bbox from its placement.
DeploymentPlan with_bbox(DeploymentPlan plan, int scene_w, int scene_h, double patch_aspect);

/// Baseline placement: uniform region, anchor inside it, scale U[0.05, 0.3],
/// no rotation. Ignores surface constraints, but the box always stays inside
/// the scene.
DeploymentPlan random_plan(int scene_w, int scene_h, double patch_aspect,
                           const std::vector<Region>& regions, Rng& rng);

/// Largest forward-facing flat region, painted at its centre; else hang on the
/// tallest pole or beam. Throws std::runtime_error("no deployable regions").
DeploymentPlan best_valid_fallback(int scene_w, int scene_h, double patch_aspect,
                                   const std::vector<Region>& regions, const PlanLimits& limits = {});

struct ProposeContext {
  std::string target_class;
  std::string feedback;            // placement notes from the previous round
  std::string detection_summary = "not measured";
  PlanLimits limits;
};

/// Scene with region boxes and index numbers drawn on it.
RasterRgb som_overlay(const SceneImage& scene, const std::vector<Region>& regions);

/// Asks the LLM for a plan; invalid replies are re-asked with the violations
/// quoted, and after the last re-ask the fallback plan is returned.
DeploymentPlan propose_plan(const SceneImage& scene, const std::vector<Region>& regions,
                            const Patch& patch, const ProposeContext& context, ChatBackend& llm,
                            const AgentSettings& settings);

}  // namespace magic::dagent
