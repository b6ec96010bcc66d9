#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "magic/raster.hpp"

namespace magic {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations. JSON and text forms are the snake_case names used on disk and
// on the wire.

/// Robust visual features of a prompt subject.
enum class Feature { shape, color, text, pattern };
enum class SurfaceKind { vertical_pole, horizontal_beam, flat_surface, other };
enum class Facing { forward, oblique, away, unknown };
enum class DeployMethod { hang, paint };
enum class Decision { accept, refine_prompt, refine_plan, refine_both, give_up };
enum class DirectiveTarget { gagent, dagent };
enum class DirectiveKind { remove, replace, refine };  // "delete" on the wire
enum class DirectiveFeature { shape, color, text, pattern, placement };
enum class AblationMode { full, gagent_naive, gagent_naive_dagent, gagent_naive_eagent_ae };

NLOHMANN_JSON_SERIALIZE_ENUM(Feature, {{Feature::shape, "shape"},
                                       {Feature::color, "color"},
                                       {Feature::text, "text"},
                                       {Feature::pattern, "pattern"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SurfaceKind, {{SurfaceKind::other, "other"},
                                           {SurfaceKind::vertical_pole, "vertical_pole"},
                                           {SurfaceKind::horizontal_beam, "horizontal_beam"},
                                           {SurfaceKind::flat_surface, "flat_surface"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Facing, {{Facing::unknown, "unknown"},
                                      {Facing::forward, "forward"},
                                      {Facing::oblique, "oblique"},
                                      {Facing::away, "away"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DeployMethod, {{DeployMethod::hang, "hang"},
                                            {DeployMethod::paint, "paint"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Decision, {{Decision::accept, "accept"},
                                        {Decision::refine_prompt, "refine_prompt"},
                                        {Decision::refine_plan, "refine_plan"},
                                        {Decision::refine_both, "refine_both"},
                                        {Decision::give_up, "give_up"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DirectiveTarget, {{DirectiveTarget::gagent, "gagent"},
                                               {DirectiveTarget::dagent, "dagent"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DirectiveKind, {{DirectiveKind::remove, "delete"},
                                             {DirectiveKind::replace, "replace"},
                                             {DirectiveKind::refine, "refine"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DirectiveFeature, {{DirectiveFeature::shape, "shape"},
                                                {DirectiveFeature::color, "color"},
                                                {DirectiveFeature::text, "text"},
                                                {DirectiveFeature::pattern, "pattern"},
                                                {DirectiveFeature::placement, "placement"}})
NLOHMANN_JSON_SERIALIZE_ENUM(AblationMode,
                             {{AblationMode::full, "full"},
                              {AblationMode::gagent_naive, "gagent_naive"},
                              {AblationMode::gagent_naive_dagent, "gagent_naive_dagent"},
                              {AblationMode::gagent_naive_eagent_ae, "gagent_naive_eagent_ae"}})

std::string to_string(Feature v);
std::string to_string(SurfaceKind v);
std::string to_string(Facing v);
std::string to_string(DeployMethod v);
std::string to_string(Decision v);
std::string to_string(DirectiveTarget v);
std::string to_string(DirectiveKind v);
std::string to_string(DirectiveFeature v);
std::string to_string(AblationMode v);

std::optional<Feature> parse_feature(std::string_view s);

/// Strict enum parse: unlike the JSON mapping, unknown names are rejected.
template <typename E>
std::optional<E> parse_enum(std::string_view s) {
  const E e = nlohmann::json(s).get<E>();
  if (nlohmann::json(e).get<std::string>() != s) return std::nullopt;
  return e;
}
std::optional<AblationMode> parse_ablation_mode(std::string_view s);

inline constexpr Feature kAllFeatures[] = {Feature::shape, Feature::color, Feature::text,
                                           Feature::pattern};

// ---------------------------------------------------------------------------

struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  [[nodiscard]] int right() const { return x + w; }
  [[nodiscard]] int bottom() const { return y + h; }
  [[nodiscard]] long long area() const { return static_cast<long long>(w) * h; }
  [[nodiscard]] bool contains(const BBox& other) const {
    return other.x >= x && other.y >= y && other.right() <= right() && other.bottom() <= bottom();
  }
  [[nodiscard]] bool inside(int width, int height) const {
    return x >= 0 && y >= 0 && w >= 0 && h >= 0 && right() <= width && bottom() <= height;
  }
  bool operator==(const BBox&) const = default;
};

/// Intersection over union; 0 when either box is empty.
double iou(const BBox& a, const BBox& b);

void to_json(json& j, const BBox& b);  // [x, y, w, h]
void from_json(const json& j, BBox& b);

struct SceneImage {
  std::string id;
  RasterRgb pixels;
  std::string source_path;

  [[nodiscard]] int width() const { return pixels.width; }
  [[nodiscard]] int height() const { return pixels.height; }
  [[nodiscard]] bool valid() const { return !id.empty() && pixels.well_formed(); }
};

/// Loads a scene from a PNG file; the id is the file stem.
SceneImage load_scene(const std::string& path);

struct AttackObjective {
  std::string target_class;
  std::string user_prompt;
};

/// Four-part prompt: subject, robust features, other features, background.
struct PromptSpec {
  std::string subject;
  std::map<Feature, std::string> robust_features;
  std::vector<std::string> other_features;
  std::string background;
  std::set<Feature> removed;

  bool operator==(const PromptSpec&) const = default;
};

/// Flat text for the text-to-image model. Removed features never appear.
std::string render_prompt(const PromptSpec& spec);

/// Empty when the spec's invariants hold.
std::vector<std::string> check_prompt_spec(const PromptSpec& spec);

struct Patch {
  RasterRgba pixels;  // square
  PromptSpec prompt;
  std::uint64_t seed = 0;
  int generation = 0;
};

struct Region {
  int index = 0;
  BBox bbox;
  std::string label;
  SurfaceKind surface_kind = SurfaceKind::other;
  Facing facing = Facing::unknown;

  bool operator==(const Region&) const = default;
};

struct DeploymentPlan {
  DeployMethod method = DeployMethod::paint;
  int region_index = 0;
  double anchor_x = 0.5;  // normalized scene coordinates
  double anchor_y = 0.5;
  double scale = 0.1;         // patch width as a fraction of scene width
  double rotation_deg = 0.0;  // clockwise in image coordinates
  BBox bbox;                  // derived, see compositor::plan_to_bbox
  std::string rationale;

  bool operator==(const DeploymentPlan&) const = default;
};

struct Detection {
  std::string label;
  double confidence = 0.0;
  BBox bbox;

  bool operator==(const Detection&) const = default;
};

struct RefineDirective {
  DirectiveTarget target = DirectiveTarget::gagent;
  DirectiveKind kind = DirectiveKind::refine;
  DirectiveFeature feature = DirectiveFeature::text;
  std::string detail;
  int rank = 1;

  bool operator==(const RefineDirective&) const = default;
};

struct IterationVerdict {
  double delta_s = 0.0;
  double naturality = 0.0;
  double theta = 0.5;
  double delta = 0.7;
  Decision decision = Decision::refine_both;
  std::vector<RefineDirective> directives;

  bool operator==(const IterationVerdict&) const = default;
};

/// Where model calls go. Remote endpoints can also come from MAGIC_LLM_ENDPOINT,
/// MAGIC_LLM_KEY and MAGIC_SIDECAR_ENDPOINT.
struct BackendConfig {
  std::string mode = "mock";  // mock | remote
  std::string llm_endpoint;
  std::string llm_path = "/v1/chat/completions";
  std::string llm_model = "gpt-4o-2024-08-06";
  std::string sidecar_endpoint;
  std::string t2i_model = "stable-diffusion-2";
  std::string segmenter_model = "som";
  double request_timeout_s = 60.0;
  std::string mock_chat_fixtures;      // JSON file, optional
  std::string mock_detector_fixtures;  // JSON file, optional
  std::string mock_segmenter_catalog;  // JSON file, optional

  bool operator==(const BackendConfig&) const = default;
};

struct RunConfig {
  double theta = 0.5;
  double delta = 0.7;
  int max_iterations = 10;
  int eval_trials = 50;
  std::vector<double> eval_conf_thresholds{0.5, 0.8};
  AblationMode ablation_mode = AblationMode::full;
  std::uint64_t rng_seed = 0;

  std::set<Feature> initial_removal{Feature::text};
  int patch_size_px = 512;
  std::string target_detector = "yolov10";
  std::vector<std::string> eval_detectors{"yolov5", "rtdetr", "yolov10"};
  bool location_gate = true;
  double location_iou = 0.1;
  double scale_min = 0.02;
  double scale_max = 0.5;
  double agent_temperature = 0.7;
  int png_compression = 6;
  std::string asset_dir;  // empty: built-in asset directory
  BackendConfig backends;

  bool operator==(const RunConfig&) const = default;
};

struct Violation {
  std::string field;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Every violated bound, in field order. Empty means valid.
std::vector<Violation> validate(const RunConfig& config);

/// Labels the bundled detectors can emit (COCO-80).
const std::vector<std::string>& detector_labels();

std::vector<Violation> validate(const AttackObjective& objective,
                                const std::vector<std::string>& known_labels = detector_labels());

void to_json(json& j, const PromptSpec& v);
void from_json(const json& j, PromptSpec& v);
void to_json(json& j, const Region& v);
void from_json(const json& j, Region& v);
void to_json(json& j, const DeploymentPlan& v);
void from_json(const json& j, DeploymentPlan& v);
void to_json(json& j, const Detection& v);
void from_json(const json& j, Detection& v);
void to_json(json& j, const RefineDirective& v);
void from_json(const json& j, RefineDirective& v);
void to_json(json& j, const IterationVerdict& v);
void from_json(const json& j, IterationVerdict& v);
void to_json(json& j, const AttackObjective& v);
void from_json(const json& j, AttackObjective& v);
void to_json(json& j, const BackendConfig& v);
void from_json(const json& j, BackendConfig& v);
void to_json(json& j, const RunConfig& v);
void from_json(const json& j, RunConfig& v);
void to_json(json& j, const Violation& v);

}  // namespace magic
