#include "magic/dagent.hpp"

#include <algorithm>
#include <cstdio>

#include <spdlog/spdlog.h>

#include "magic/compositor.hpp"

namespace magic::dagent {

SurfaceTable::SurfaceTable(const json& doc) {
  for (const auto& [label, v] : doc.at("labels").items()) {
    entries_.push_back({to_lower(label), {v.at(0).get<SurfaceKind>(), v.at(1).get<Facing>()}});
  }
  // Longest keys first so containment prefers the most specific label.
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
}

SurfaceTable SurfaceTable::load(const AssetStore& assets) {
  return SurfaceTable(assets.json_asset("surface_kinds.json"));
}

std::pair<SurfaceKind, Facing> SurfaceTable::lookup(const std::string& label) const {
  const std::string key = to_lower(label);
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  for (const auto& [k, v] : entries_)
    if (key.find(k) != std::string::npos) return v;
  return {SurfaceKind::other, Facing::unknown};
}

std::vector<Region> catalog_regions(const SceneImage& scene, Segmenter& segmenter,
                                    const SurfaceTable& table) {
  if (!scene.valid()) throw std::invalid_argument("scene is not valid");
  std::vector<Region> regions = segmenter.segment(scene);
  if (regions.empty()) throw std::runtime_error("no deployable regions");
  int next = 1;
  for (auto& r : regions) {
    r.index = next++;
    std::tie(r.surface_kind, r.facing) = table.lookup(r.label);
  }
  return regions;
}

// ---------------------------------------------------------------------------

namespace {

const Region* find_region(const std::vector<Region>& regions, int index) {
  for (const auto& r : regions)
    if (r.index == index) return &r;
  return nullptr;
}

bool hangable(SurfaceKind k) { return k == SurfaceKind::vertical_pole || k == SurfaceKind::horizontal_beam; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

DeploymentPlan with_bbox(DeploymentPlan plan, int scene_w, int scene_h, double patch_aspect) {
  plan.bbox = compositor::plan_to_bbox(plan, scene_w, scene_h, patch_aspect);
  return plan;
}

std::vector<std::string> validate_plan(const DeploymentPlan& plan, int scene_w, int scene_h,
                                       double patch_aspect, const std::vector<Region>& regions,
                                       const PlanLimits& limits) {
  std::vector<std::string> out;
  const bool anchor_ok = plan.anchor_x >= 0.0 && plan.anchor_x <= 1.0 && plan.anchor_y >= 0.0 &&
                         plan.anchor_y <= 1.0;
  const bool scale_ok = plan.scale >= limits.scale_min && plan.scale <= limits.scale_max;
  const bool rotation_ok = std::abs(plan.rotation_deg) <= limits.rotation_max_deg;
  const bool geometry_ok = anchor_ok && plan.scale > 0.0 && plan.scale <= 1.0 && rotation_ok;
  const BBox box = geometry_ok ? compositor::plan_to_bbox(plan, scene_w, scene_h, patch_aspect) : plan.bbox;

  if (!box.inside(scene_w, scene_h) || box.area() == 0) out.emplace_back("bbox outside the scene");
  const Region* region = find_region(regions, plan.region_index);
  if (!region) {
    out.push_back("region " + std::to_string(plan.region_index) + " does not exist");
  } else {
    if (!region->bbox.contains(box)) {
      out.push_back("bbox not inside region " + std::to_string(region->index) + " (occlusion)");
    }
    if (plan.method == DeployMethod::hang && !hangable(region->surface_kind)) {
      out.emplace_back("hang requires a vertical_pole or horizontal_beam region");
    }
    if (plan.method == DeployMethod::paint) {
      if (region->surface_kind != SurfaceKind::flat_surface) out.emplace_back("paint requires a flat_surface region");
      if (region->facing != Facing::forward) out.emplace_back("forward-facing required");
    }
  }
  if (!scale_ok) out.push_back("scale ∉ [" + num(limits.scale_min) + ", " + num(limits.scale_max) + "]");
  if (!rotation_ok) {
    out.push_back("rotation ∉ [" + num(-limits.rotation_max_deg) + ", " + num(limits.rotation_max_deg) + "]");
  }
  if (!anchor_ok) out.emplace_back("anchor ∉ [0,1]²");
  if (geometry_ok && box != plan.bbox) out.emplace_back("bbox_px does not match the placement");
  return out;
}

DeploymentPlan random_plan(int scene_w, int scene_h, double patch_aspect,
                           const std::vector<Region>& regions, Rng& rng) {
  if (regions.empty()) throw std::runtime_error("no deployable regions");
  const Region& region = regions[rng.below(regions.size())];
  DeploymentPlan plan;
  plan.region_index = region.index;
  plan.method = hangable(region.surface_kind) ? DeployMethod::hang : DeployMethod::paint;
  plan.rotation_deg = 0.0;
  plan.scale = rng.uniform(0.05, 0.3);
  // Keep the patch height within the scene for wide scenes.
  plan.scale = std::min(plan.scale, 0.98 * scene_h * patch_aspect / scene_w);

  const double w = plan.scale * scene_w;
  const double h = w / patch_aspect;
  auto pick = [&](double lo, double hi, double half, double extent) {
    // Anchor inside the region, narrowed so the patch stays in the scene.
    const double a = std::max(lo, half);
    const double b = std::min(hi, extent - half);
    if (a <= b) return rng.uniform(a, b);
    return std::clamp(rng.uniform(lo, hi), half, extent - half);
  };
  const double cx = pick(region.bbox.x, region.bbox.right(), w / 2.0, scene_w);
  const double cy = pick(region.bbox.y, region.bbox.bottom(), h / 2.0, scene_h);
  plan.anchor_x = cx / scene_w;
  plan.anchor_y = cy / scene_h;
  plan.rationale = "random";
  return with_bbox(plan, scene_w, scene_h, patch_aspect);
}

DeploymentPlan best_valid_fallback(int scene_w, int scene_h, double patch_aspect,
                                   const std::vector<Region>& regions, const PlanLimits& limits) {
  std::vector<const Region*> flats, hangs;
  for (const auto& r : regions) {
    if (r.surface_kind == SurfaceKind::flat_surface && r.facing == Facing::forward) flats.push_back(&r);
    if (hangable(r.surface_kind)) hangs.push_back(&r);
  }
  std::stable_sort(flats.begin(), flats.end(), [](const Region* a, const Region* b) {
    return a->bbox.area() != b->bbox.area() ? a->bbox.area() > b->bbox.area() : a->index < b->index;
  });
  std::stable_sort(hangs.begin(), hangs.end(), [](const Region* a, const Region* b) {
    return a->bbox.h != b->bbox.h ? a->bbox.h > b->bbox.h : a->index < b->index;
  });

  auto attempt = [&](const Region& r, DeployMethod method) -> std::optional<DeploymentPlan> {
    DeploymentPlan plan;
    plan.method = method;
    plan.region_index = r.index;
    plan.anchor_x = (r.bbox.x + r.bbox.w / 2.0) / scene_w;
    plan.anchor_y = (r.bbox.y + r.bbox.h / 2.0) / scene_h;
    plan.scale = std::min({0.2, limits.scale_max, 0.8 * r.bbox.w / scene_w,
                           0.8 * r.bbox.h * patch_aspect / scene_w});
    plan.rotation_deg = 0.0;
    plan.rationale = "fallback";
    plan = with_bbox(plan, scene_w, scene_h, patch_aspect);
    if (!validate_plan(plan, scene_w, scene_h, patch_aspect, regions, limits).empty()) return std::nullopt;
    return plan;
  };
  for (const Region* r : flats)
    if (auto p = attempt(*r, DeployMethod::paint)) return *p;
  for (const Region* r : hangs)
    if (auto p = attempt(*r, DeployMethod::hang)) return *p;
  throw std::runtime_error("no deployable regions");
}

// ---------------------------------------------------------------------------

namespace {

// 3x5 digit glyphs, one row per 3-bit group, top row first.
constexpr std::uint16_t kDigits[10] = {
    0b111'101'101'101'111, 0b010'110'010'010'111, 0b111'001'111'100'111, 0b111'001'111'001'111,
    0b101'101'111'001'001, 0b111'100'111'001'111, 0b111'100'111'101'111, 0b111'001'010'010'010,
    0b111'101'111'101'111, 0b111'101'111'001'111};

void fill(RasterRgb& img, int x0, int y0, int w, int h, std::array<std::uint8_t, 3> c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x) {
      auto p = img.at(x, y);
      p[0] = c[0], p[1] = c[1], p[2] = c[2];
    }
}

void draw_number(RasterRgb& img, int x, int y, int value, int cell) {
  const std::string digits = std::to_string(value);
  fill(img, x, y, static_cast<int>(digits.size()) * 4 * cell + cell, 7 * cell, {0, 0, 0});
  int cx = x + cell;
  for (char ch : digits) {
    const std::uint16_t g = kDigits[ch - '0'];
    for (int row = 0; row < 5; ++row)
      for (int col = 0; col < 3; ++col)
        if (g >> (14 - row * 3 - col) & 1) fill(img, cx + col * cell, y + cell + row * cell, cell, cell, {255, 255, 255});
    cx += 4 * cell;
  }
}

}  // namespace

RasterRgb som_overlay(const SceneImage& scene, const std::vector<Region>& regions) {
  RasterRgb img = scene.pixels;
  const int cell = std::max(1, std::min(img.width, img.height) / 160);
  for (const auto& r : regions) {
    const auto c = static_cast<std::uint8_t>(64 + (r.index * 53) % 192);
    const std::array<std::uint8_t, 3> color{255, c, static_cast<std::uint8_t>(255 - c)};
    const BBox& b = r.bbox;
    fill(img, b.x, b.y, b.w, cell, color);
    fill(img, b.x, b.bottom() - cell, b.w, cell, color);
    fill(img, b.x, b.y, cell, b.h, color);
    fill(img, b.right() - cell, b.y, cell, b.h, color);
    draw_number(img, b.x + cell, b.y + cell, r.index, cell);
  }
  return img;
}

namespace {

std::string system_prompt(const AssetStore& assets, const ProposeContext& ctx) {
  const std::string psr = fill_template(assets.text("prompts/psr_explanation.txt"),
                                        {{"SCALE_MIN", num(ctx.limits.scale_min)},
                                         {"SCALE_MAX", num(ctx.limits.scale_max)}});
  return fill_template(assets.text("prompts/dagent.txt"),
                       {{"CATEGORY", ctx.target_class},
                        {"HP_SPEC", assets.text("prompts/hp_specification.txt")},
                        {"PSR_EXPLAIN", psr},
                        {"PATCH_DETECT_RESULT", ctx.detection_summary}});
}

std::optional<DeploymentPlan> parse_plan(const json& j, std::vector<std::string>& problems) {
  DeploymentPlan plan;
  if (!j.contains("method") || !j["method"].is_string()) {
    problems.emplace_back("method must be \"hang\" or \"paint\"");
  } else if (auto m = parse_enum<DeployMethod>(j["method"].get<std::string>())) {
    plan.method = *m;
  } else {
    problems.emplace_back("method must be \"hang\" or \"paint\"");
  }
  if (!j.contains("region_index") || !j["region_index"].is_number_integer()) {
    problems.emplace_back("region_index must be an integer");
  } else {
    plan.region_index = j["region_index"].get<int>();
  }
  if (!j.contains("anchor") || !j["anchor"].is_array() || j["anchor"].size() != 2 ||
      !j["anchor"][0].is_number() || !j["anchor"][1].is_number()) {
    problems.emplace_back("anchor must be [x, y]");
  } else {
    plan.anchor_x = j["anchor"][0].get<double>();
    plan.anchor_y = j["anchor"][1].get<double>();
  }
  if (!j.contains("scale") || !j["scale"].is_number()) problems.emplace_back("scale must be a number");
  else plan.scale = j["scale"].get<double>();
  if (j.contains("rotation_deg")) {
    if (!j["rotation_deg"].is_number()) problems.emplace_back("rotation_deg must be a number");
    else plan.rotation_deg = j["rotation_deg"].get<double>();
  }
  if (j.contains("rationale") && j["rationale"].is_string()) plan.rationale = j["rationale"].get<std::string>();
  if (j.contains("position") && j["position"].is_string() && plan.rationale.empty()) {
    plan.rationale = j["position"].get<std::string>();
  }
  if (!problems.empty()) return std::nullopt;
  return plan;
}

}  // namespace

DeploymentPlan propose_plan(const SceneImage& scene, const std::vector<Region>& regions,
                            const Patch& patch, const ProposeContext& context, ChatBackend& llm,
                            const AgentSettings& settings) {
  if (regions.empty()) throw std::runtime_error("no deployable regions");
  const auto& assets = assets_of(settings);
  const int W = scene.width();
  const int H = scene.height();
  const double aspect = static_cast<double>(patch.pixels.width) / patch.pixels.height;

  json catalog = json::array();
  for (const auto& r : regions) {
    catalog.push_back({{"index", r.index},
                       {"label", r.label},
                       {"bbox", r.bbox},
                       {"surface_kind", r.surface_kind},
                       {"facing", r.facing}});
  }
  const std::string user = fill_template(
      assets.text("prompts/tasks/propose_plan.txt"),
      {{"SCENE_SIZE", std::to_string(W) + "x" + std::to_string(H)},
       {"REGIONS", catalog.dump()},
       {"FEEDBACK", context.feedback.empty() ? "" : "FEEDBACK: " + context.feedback}});
  auto request = make_request(settings, system_prompt(assets, context), user,
                              {encode_png(som_overlay(scene, regions), {settings.png_compression, 0}),
                               encode_png(patch.pixels, {settings.png_compression, 0})});

  DeploymentPlan accepted;
  auto check = [&](const json& j) {
    std::vector<std::string> problems;
    auto plan = parse_plan(j, problems);
    if (!plan) return problems;
    *plan = with_bbox(*plan, W, H, aspect);
    problems = validate_plan(*plan, W, H, aspect, regions, context.limits);
    if (problems.empty()) accepted = *plan;
    return problems;
  };
  const auto reply = ask_structured(llm, settings, std::move(request), check);
  if (reply.value) return accepted;
  spdlog::warn("no valid plan after {} attempts ({}); using fallback placement", reply.attempts,
               reply.problems.empty() ? "unparseable" : reply.problems.front());
  return best_valid_fallback(W, H, aspect, regions, context.limits);
}

}  // namespace magic::dagent
