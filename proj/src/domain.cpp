#include "magic/domain.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>

namespace magic {

namespace {

template <typename E>
std::string enum_name(E v) {
  return json(v).template get<std::string>();
}

}  // namespace

std::string to_string(Feature v) { return enum_name(v); }
std::string to_string(SurfaceKind v) { return enum_name(v); }
std::string to_string(Facing v) { return enum_name(v); }
std::string to_string(DeployMethod v) { return enum_name(v); }
std::string to_string(Decision v) { return enum_name(v); }
std::string to_string(DirectiveTarget v) { return enum_name(v); }
std::string to_string(DirectiveKind v) { return enum_name(v); }
std::string to_string(DirectiveFeature v) { return enum_name(v); }
std::string to_string(AblationMode v) { return enum_name(v); }

std::optional<Feature> parse_feature(std::string_view s) {
  for (Feature f : kAllFeatures) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

std::optional<AblationMode> parse_ablation_mode(std::string_view s) {
  for (AblationMode m : {AblationMode::full, AblationMode::gagent_naive,
                         AblationMode::gagent_naive_dagent, AblationMode::gagent_naive_eagent_ae}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

double iou(const BBox& a, const BBox& b) {
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0) return 0.0;
  const int ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void to_json(json& j, const BBox& b) { j = json::array({b.x, b.y, b.w, b.h}); }

void from_json(const json& j, BBox& b) {
  if (!j.is_array() || j.size() != 4) throw json::type_error::create(302, "bbox must be [x,y,w,h]", &j);
  b = BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

SceneImage load_scene(const std::string& path) {
  SceneImage scene;
  scene.pixels = read_png_rgb(path);
  scene.id = std::filesystem::path(path).stem().string();
  scene.source_path = path;
  return scene;
}

// ---------------------------------------------------------------------------

std::string render_prompt(const PromptSpec& spec) {
  auto feature = [&](Feature f) -> const std::string* {
    if (spec.removed.count(f)) return nullptr;
    auto it = spec.robust_features.find(f);
    return it == spec.robust_features.end() || it->second.empty() ? nullptr : &it->second;
  };

  std::string head;
  for (Feature f : {Feature::shape, Feature::color}) {
    if (const auto* v = feature(f)) head += *v + " ";
  }
  head += spec.subject;
  const char first = static_cast<char>(std::tolower(static_cast<unsigned char>(head.front())));
  const bool vowel = first == 'a' || first == 'e' || first == 'i' || first == 'o' || first == 'u';
  std::string out = (vowel ? "an " : "a ") + head;

  std::vector<std::string> clauses;
  if (const auto* v = feature(Feature::text)) clauses.push_back("the text " + *v);
  if (const auto* v = feature(Feature::pattern)) clauses.push_back(*v);
  for (std::size_t i = 0; i < clauses.size(); ++i) out += (i == 0 ? " with " : " and ") + clauses[i];

  for (const auto& other : spec.other_features) {
    if (!other.empty()) out += ", " + other;
  }
  if (!spec.background.empty()) out += ", " + spec.background;
  return out;
}

std::vector<std::string> check_prompt_spec(const PromptSpec& spec) {
  std::vector<std::string> problems;
  if (spec.subject.empty()) problems.emplace_back("subject must be non-empty");
  for (Feature f : spec.removed) {
    if (spec.robust_features.count(f)) {
      problems.push_back("feature '" + to_string(f) + "' is both present and removed");
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------

std::vector<Violation> validate(const RunConfig& c) {
  std::vector<Violation> out;
  auto unit = [&](const char* field, double v) {
    if (!(v > 0.0 && v <= 1.0)) out.push_back({field, std::string(field) + " ∉ (0,1]"});
  };
  unit("theta", c.theta);
  unit("delta", c.delta);
  if (c.max_iterations < 1) out.push_back({"max_iterations", "max_iterations ≥ 1"});
  if (c.eval_trials < 1) out.push_back({"eval_trials", "eval_trials ≥ 1"});
  for (std::size_t i = 0; i < c.eval_conf_thresholds.size(); ++i) {
    const double t = c.eval_conf_thresholds[i];
    if (!(t >= 0.0 && t <= 1.0)) {
      out.push_back({"eval_conf_thresholds/" + std::to_string(i), "threshold ∉ [0,1]"});
    }
  }
  if (c.patch_size_px < 64 || c.patch_size_px > 2048) {
    out.push_back({"patch_size_px", "patch_size_px ∉ [64,2048]"});
  }
  if (c.target_detector.empty()) out.push_back({"target_detector", "target_detector must be set"});
  if (c.eval_detectors.empty()) out.push_back({"eval_detectors", "at least one detector"});
  if (!(c.location_iou >= 0.0 && c.location_iou <= 1.0)) {
    out.push_back({"location_iou", "location_iou ∉ [0,1]"});
  }
  if (!(c.scale_min > 0.0 && c.scale_min <= c.scale_max && c.scale_max <= 1.0)) {
    out.push_back({"scale_min", "require 0 < scale_min ≤ scale_max ≤ 1"});
  }
  if (!(c.agent_temperature >= 0.0 && c.agent_temperature <= 2.0)) {
    out.push_back({"agent_temperature", "agent_temperature ∉ [0,2]"});
  }
  if (c.png_compression < 0 || c.png_compression > 9) {
    out.push_back({"png_compression", "png_compression ∉ [0,9]"});
  }
  if (c.backends.mode != "mock" && c.backends.mode != "remote") {
    out.push_back({"backends/mode", "mode must be 'mock' or 'remote'"});
  }
  if (!(c.backends.request_timeout_s > 0.0)) {
    out.push_back({"backends/request_timeout_s", "request_timeout_s > 0"});
  }
  return out;
}

const std::vector<std::string>& detector_labels() {
  static const std::vector<std::string> labels = {
      "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat",
      "traffic light", "fire hydrant", "stop sign", "parking meter", "bench", "bird", "cat", "dog",
      "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella",
      "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
      "baseball bat", "baseball glove", "skateboard", "surfboard", "tennis racket", "bottle",
      "wine glass", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
      "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair", "couch",
      "potted plant", "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
      "keyboard", "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator", "book",
      "clock", "vase", "scissors", "teddy bear", "hair drier", "toothbrush"};
  return labels;
}

std::vector<Violation> validate(const AttackObjective& objective,
                                const std::vector<std::string>& known_labels) {
  std::vector<Violation> out;
  if (objective.target_class.empty()) {
    out.push_back({"target_class", "target_class must be non-empty"});
  } else if (std::find(known_labels.begin(), known_labels.end(), objective.target_class) ==
             known_labels.end()) {
    out.push_back({"target_class", "'" + objective.target_class + "' is not a detector label"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const PromptSpec& v) {
  json robust = json::object();
  for (const auto& [k, s] : v.robust_features) robust[to_string(k)] = s;
  j = json{{"subject", v.subject},
           {"robust_features", robust},
           {"other_features", v.other_features},
           {"background", v.background},
           {"removed", v.removed}};
}

void from_json(const json& j, PromptSpec& v) {
  v = PromptSpec{};
  j.at("subject").get_to(v.subject);
  const json robust = j.value("robust_features", json::object());
  for (const auto& [k, s] : robust.items()) {
    auto f = parse_feature(k);
    if (!f) throw json::other_error::create(501, "unknown robust feature '" + k + "'", &j);
    v.robust_features[*f] = s.get<std::string>();
  }
  v.other_features = j.value("other_features", std::vector<std::string>{});
  v.background = j.value("background", std::string{});
  v.removed = j.value("removed", std::set<Feature>{});
}

void to_json(json& j, const Region& v) {
  j = json{{"index", v.index},
           {"bbox", v.bbox},
           {"label", v.label},
           {"surface_kind", v.surface_kind},
           {"facing", v.facing}};
}

void from_json(const json& j, Region& v) {
  v = Region{};
  j.at("index").get_to(v.index);
  j.at("bbox").get_to(v.bbox);
  v.label = j.value("label", std::string{});
  v.surface_kind = j.value("surface_kind", SurfaceKind::other);
  v.facing = j.value("facing", Facing::unknown);
}

void to_json(json& j, const DeploymentPlan& v) {
  j = json{{"method", v.method},
           {"region_index", v.region_index},
           {"anchor", {v.anchor_x, v.anchor_y}},
           {"scale", v.scale},
           {"rotation_deg", v.rotation_deg},
           {"bbox_px", v.bbox},
           {"rationale", v.rationale}};
}

void from_json(const json& j, DeploymentPlan& v) {
  v = DeploymentPlan{};
  j.at("method").get_to(v.method);
  j.at("region_index").get_to(v.region_index);
  const auto& anchor = j.at("anchor");
  v.anchor_x = anchor.at(0).get<double>();
  v.anchor_y = anchor.at(1).get<double>();
  j.at("scale").get_to(v.scale);
  v.rotation_deg = j.value("rotation_deg", 0.0);
  if (j.contains("bbox_px")) j.at("bbox_px").get_to(v.bbox);
  v.rationale = j.value("rationale", std::string{});
}

void to_json(json& j, const Detection& v) {
  j = json{{"label", v.label}, {"confidence", v.confidence}, {"bbox", v.bbox}};
}

void from_json(const json& j, Detection& v) {
  j.at("label").get_to(v.label);
  j.at("confidence").get_to(v.confidence);
  j.at("bbox").get_to(v.bbox);
}

void to_json(json& j, const RefineDirective& v) {
  j = json{{"target", v.target},
           {"kind", v.kind},
           {"feature", v.feature},
           {"detail", v.detail},
           {"rank", v.rank}};
}

void from_json(const json& j, RefineDirective& v) {
  j.at("target").get_to(v.target);
  j.at("kind").get_to(v.kind);
  j.at("feature").get_to(v.feature);
  v.detail = j.value("detail", std::string{});
  v.rank = j.value("rank", 1);
}

void to_json(json& j, const IterationVerdict& v) {
  j = json{{"delta_s", v.delta_s},       {"naturality", v.naturality}, {"theta", v.theta},
           {"delta", v.delta},           {"decision", v.decision},     {"directives", v.directives}};
}

void from_json(const json& j, IterationVerdict& v) {
  j.at("delta_s").get_to(v.delta_s);
  j.at("naturality").get_to(v.naturality);
  j.at("theta").get_to(v.theta);
  j.at("delta").get_to(v.delta);
  j.at("decision").get_to(v.decision);
  v.directives = j.value("directives", std::vector<RefineDirective>{});
}

void to_json(json& j, const AttackObjective& v) {
  j = json{{"target_class", v.target_class}, {"user_prompt", v.user_prompt}};
}

void from_json(const json& j, AttackObjective& v) {
  j.at("target_class").get_to(v.target_class);
  v.user_prompt = j.value("user_prompt", std::string{});
}

void to_json(json& j, const BackendConfig& v) {
  j = json{{"mode", v.mode},
           {"llm_endpoint", v.llm_endpoint},
           {"llm_path", v.llm_path},
           {"llm_model", v.llm_model},
           {"sidecar_endpoint", v.sidecar_endpoint},
           {"t2i_model", v.t2i_model},
           {"segmenter_model", v.segmenter_model},
           {"request_timeout_s", v.request_timeout_s},
           {"mock_chat_fixtures", v.mock_chat_fixtures},
           {"mock_detector_fixtures", v.mock_detector_fixtures},
           {"mock_segmenter_catalog", v.mock_segmenter_catalog}};
}

void from_json(const json& j, BackendConfig& v) {
  const BackendConfig d;
  v.mode = j.value("mode", d.mode);
  v.llm_endpoint = j.value("llm_endpoint", d.llm_endpoint);
  v.llm_path = j.value("llm_path", d.llm_path);
  v.llm_model = j.value("llm_model", d.llm_model);
  v.sidecar_endpoint = j.value("sidecar_endpoint", d.sidecar_endpoint);
  v.t2i_model = j.value("t2i_model", d.t2i_model);
  v.segmenter_model = j.value("segmenter_model", d.segmenter_model);
  v.request_timeout_s = j.value("request_timeout_s", d.request_timeout_s);
  v.mock_chat_fixtures = j.value("mock_chat_fixtures", d.mock_chat_fixtures);
  v.mock_detector_fixtures = j.value("mock_detector_fixtures", d.mock_detector_fixtures);
  v.mock_segmenter_catalog = j.value("mock_segmenter_catalog", d.mock_segmenter_catalog);
}

void to_json(json& j, const RunConfig& v) {
  j = json{{"theta", v.theta},
           {"delta", v.delta},
           {"max_iterations", v.max_iterations},
           {"eval_trials", v.eval_trials},
           {"eval_conf_thresholds", v.eval_conf_thresholds},
           {"ablation_mode", v.ablation_mode},
           {"rng_seed", v.rng_seed},
           {"initial_removal", v.initial_removal},
           {"patch_size_px", v.patch_size_px},
           {"target_detector", v.target_detector},
           {"eval_detectors", v.eval_detectors},
           {"location_gate", v.location_gate},
           {"location_iou", v.location_iou},
           {"scale_min", v.scale_min},
           {"scale_max", v.scale_max},
           {"agent_temperature", v.agent_temperature},
           {"png_compression", v.png_compression},
           {"asset_dir", v.asset_dir},
           {"backends", v.backends}};
}

void from_json(const json& j, RunConfig& v) {
  const RunConfig d;
  v.theta = j.value("theta", d.theta);
  v.delta = j.value("delta", d.delta);
  v.max_iterations = j.value("max_iterations", d.max_iterations);
  v.eval_trials = j.value("eval_trials", d.eval_trials);
  v.eval_conf_thresholds = j.value("eval_conf_thresholds", d.eval_conf_thresholds);
  v.ablation_mode = j.value("ablation_mode", d.ablation_mode);
  v.rng_seed = j.value("rng_seed", d.rng_seed);
  v.initial_removal = j.value("initial_removal", d.initial_removal);
  v.patch_size_px = j.value("patch_size_px", d.patch_size_px);
  v.target_detector = j.value("target_detector", d.target_detector);
  v.eval_detectors = j.value("eval_detectors", d.eval_detectors);
  v.location_gate = j.value("location_gate", d.location_gate);
  v.location_iou = j.value("location_iou", d.location_iou);
  v.scale_min = j.value("scale_min", d.scale_min);
  v.scale_max = j.value("scale_max", d.scale_max);
  v.agent_temperature = j.value("agent_temperature", d.agent_temperature);
  v.png_compression = j.value("png_compression", d.png_compression);
  v.asset_dir = j.value("asset_dir", d.asset_dir);
  v.backends = j.value("backends", d.backends);
}

void to_json(json& j, const Violation& v) { j = json{{"field", v.field}, {"message", v.message}}; }

}  // namespace magic
