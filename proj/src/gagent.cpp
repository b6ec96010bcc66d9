#include "magic/gagent.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace magic::gagent {

void to_json(json& j, const SceneDescription& v) {
  j = json{{"summary", v.summary}, {"salient_objects", v.salient_objects}, {"style_tags", v.style_tags}};
}

void from_json(const json& j, SceneDescription& v) {
  j.at("summary").get_to(v.summary);
  v.salient_objects = j.value("salient_objects", std::vector<std::string>{});
  v.style_tags = j.value("style_tags", std::vector<std::string>{});
}

// ---------------------------------------------------------------------------

namespace {

std::map<Feature, std::string> read_canonical(const json& j) {
  std::map<Feature, std::string> out;
  for (const auto& [k, v] : j.items()) {
    auto f = parse_feature(k);
    if (!f) throw std::runtime_error("unknown feature in templates: " + k);
    out[*f] = v.get<std::string>();
  }
  return out;
}

std::map<Feature, std::vector<std::string>> read_alternatives(const json& j) {
  std::map<Feature, std::vector<std::string>> out;
  for (const auto& [k, v] : j.items()) {
    auto f = parse_feature(k);
    if (!f) throw std::runtime_error("unknown feature in templates: " + k);
    out[*f] = v.get<std::vector<std::string>>();
    if (out[*f].empty()) throw std::runtime_error("empty alternative list for " + k);
  }
  return out;
}

}  // namespace

FeatureTemplates::FeatureTemplates(const json& doc) {
  for (const auto& [name, e] : doc.at("classes").items()) {
    classes_[to_lower(name)] = {read_canonical(e.value("canonical", json::object())),
                                read_alternatives(e.value("alternatives", json::object()))};
  }
  const json& g = doc.at("generic");
  generic_ = {read_canonical(g.value("canonical", json::object())),
              read_alternatives(g.value("alternatives", json::object()))};
}

FeatureTemplates FeatureTemplates::load(const AssetStore& assets) {
  return FeatureTemplates(assets.json_asset("templates/ndda_features.json"));
}

bool FeatureTemplates::knows(const std::string& target_class) const {
  return classes_.count(to_lower(target_class)) > 0;
}

const FeatureTemplates::Entry& FeatureTemplates::entry(const std::string& target_class) const {
  auto it = classes_.find(to_lower(target_class));
  return it == classes_.end() ? generic_ : it->second;
}

const std::map<Feature, std::string>& FeatureTemplates::canonical(const std::string& target_class) const {
  return entry(target_class).canonical;
}

const std::vector<std::string>& FeatureTemplates::alternatives(const std::string& target_class,
                                                               Feature feature) const {
  static const std::vector<std::string> kNone;
  const auto& alts = entry(target_class).alternatives;
  auto it = alts.find(feature);
  return it == alts.end() ? kNone : it->second;
}

PromptSpec initial_prompt(const AttackObjective& objective, const std::set<Feature>& removal,
                          std::uint64_t seed, const FeatureTemplates& templates) {
  if (objective.target_class.empty()) throw std::invalid_argument("target_class must be non-empty");
  if (!templates.knows(objective.target_class)) {
    spdlog::warn("no feature template for '{}', using generic alternatives", objective.target_class);
  }

  PromptSpec spec;
  spec.subject = objective.target_class;
  spec.robust_features = templates.canonical(objective.target_class);

  std::string removal_key;
  for (Feature f : removal) removal_key += to_string(f) + ",";

  for (Feature f : removal) {
    const auto& alts = templates.alternatives(objective.target_class, f);
    if (alts.empty()) {
      spec.robust_features.erase(f);
      continue;
    }
    std::size_t pick = 0;
    if (seed != 0) {
      const std::string salt = to_lower(objective.target_class) + "|" + to_string(f) + "|" + removal_key;
      pick = static_cast<std::size_t>(mix64(derive_seed(seed, salt)) % alts.size());
    }
    spec.robust_features[f] = alts[pick];
  }
  return spec;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> check_string_list(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j[key].is_array()) return {std::string(key) + " must be a list of strings"};
  for (const auto& v : j[key]) {
    if (!v.is_string()) return {std::string(key) + " must be a list of strings"};
  }
  return {};
}

std::string system_prompt(const AssetStore& assets, const std::string& category,
                          const DetectionFeedback& feedback) {
  return fill_template(assets.text("prompts/gagent.txt"),
                       {{"CATEGORY", category},
                        {"PIPELINE", pipeline_text(assets, category)},
                        {"ROBUST_FEATURE", assets.text("prompts/robust_feature_definition.txt")},
                        {"PATCH_DETECT_RESULT", feedback.patch_result},
                        {"ENVwPATCH_DETECT_RESULT", feedback.scene_result}});
}

}  // namespace

SceneDescription describe_scene(const SceneImage& scene, const std::string& target_class,
                                ChatBackend& llm, const AgentSettings& settings) {
  if (!scene.valid()) throw std::invalid_argument("scene is not valid");
  const auto& assets = assets_of(settings);
  auto request = make_request(settings, system_prompt(assets, target_class, {}),
                              assets.text("prompts/tasks/describe_scene.txt"),
                              {encode_png(scene.pixels, {settings.png_compression, 0})});
  auto check = [](const json& j) {
    std::vector<std::string> problems;
    if (!j.contains("summary") || !j["summary"].is_string() || j["summary"].get<std::string>().empty()) {
      problems.emplace_back("summary must be a non-empty string");
    }
    for (const char* key : {"salient_objects", "style_tags"}) {
      auto p = check_string_list(j, key);
      problems.insert(problems.end(), p.begin(), p.end());
    }
    return problems;
  };
  return ask_structured_or_throw(llm, settings, std::move(request), check, "describe_scene")
      .get<SceneDescription>();
}

PromptSpec apply_directives(PromptSpec spec, const std::vector<RefineDirective>& directives) {
  std::vector<RefineDirective> ordered = directives;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const RefineDirective& a, const RefineDirective& b) { return a.rank < b.rank; });
  for (const auto& d : ordered) {
    if (d.target != DirectiveTarget::gagent || d.feature == DirectiveFeature::placement) {
      throw std::invalid_argument("prompt refinement only takes gagent feature directives");
    }
    const Feature f = *parse_feature(to_string(d.feature));
    switch (d.kind) {
      case DirectiveKind::remove:
        if (spec.robust_features.erase(f) == 0) {
          spdlog::warn("delete directive for absent feature '{}' ignored", to_string(f));
          break;
        }
        spec.removed.insert(f);
        break;
      case DirectiveKind::replace:
        spec.robust_features[f] = d.detail;
        spec.removed.erase(f);
        break;
      case DirectiveKind::refine: {
        auto it = spec.robust_features.find(f);
        if (it == spec.robust_features.end() || it->second.empty()) {
          spec.robust_features[f] = d.detail;
          spec.removed.erase(f);
        } else if (!d.detail.empty() && it->second.find(d.detail) == std::string::npos) {
          it->second += ", " + d.detail;
        }
        break;
      }
    }
  }
  return spec;
}

PromptSpec refine_prompt(const PromptSpec& prev, const SceneDescription& scene_desc,
                         const std::vector<RefineDirective>& directives, RefineMode mode,
                         ChatBackend* llm, const AgentSettings& settings, const RasterRgba* prev_patch,
                         const DetectionFeedback& feedback) {
  if (mode == RefineMode::frozen) return prev;
  PromptSpec next = apply_directives(prev, directives);
  if (mode == RefineMode::directives_only) return next;
  if (!llm) throw std::invalid_argument("full prompt refinement needs an LLM");

  const auto& assets = assets_of(settings);
  const std::string user = fill_template(assets.text("prompts/tasks/refine_prompt.txt"),
                                         {{"SCENE_DESCRIPTION", json(scene_desc).dump()},
                                          {"CURRENT_PROMPT", render_prompt(next)},
                                          {"CURRENT_PROMPT_PARTS", json(next).dump()}});
  std::vector<std::string> images;
  if (prev_patch) images.push_back(encode_png(*prev_patch, {settings.png_compression, 0}));
  auto request = make_request(settings, system_prompt(assets, prev.subject, feedback), user, std::move(images));
  auto check = [](const json& j) {
    std::vector<std::string> problems = check_string_list(j, "other_features");
    if (!j.contains("other_features")) problems.emplace_back("other_features is required");
    if (!j.contains("background") || !j["background"].is_string()) {
      problems.emplace_back("background must be a string");
    }
    return problems;
  };
  const json reply = ask_structured_or_throw(*llm, settings, std::move(request), check, "refine_prompt");
  next.other_features = reply["other_features"].get<std::vector<std::string>>();
  next.background = reply["background"].get<std::string>();
  return next;
}

Patch generate_patch(const PromptSpec& spec, TextToImage& t2i, std::uint64_t seed, int generation,
                     int size_px) {
  if (auto problems = check_prompt_spec(spec); !problems.empty()) {
    throw std::invalid_argument("invalid prompt: " + problems.front());
  }
  if (generation < 0) throw std::invalid_argument("generation must be >= 0");
  Patch patch;
  patch.pixels = t2i.t2i(render_prompt(spec), seed, size_px);
  patch.prompt = spec;
  patch.seed = seed;
  patch.generation = generation;
  return patch;
}

}  // namespace magic::gagent
