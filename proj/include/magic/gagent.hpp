#pragma once

#include <set>
#include <string>
#include <vector>

#include "magic/agent_io.hpp"
#include "magic/domain.hpp"

namespace magic::gagent {

struct SceneDescription {
  std::string summary;
  std::vector<std::string> salient_objects;
  std::vector<std::string> style_tags;

  bool operator==(const SceneDescription&) const = default;
};

void to_json(json& j, const SceneDescription& v);
void from_json(const json& j, SceneDescription& v);

/// Detection results quoted back to the agent on later rounds.
struct DetectionFeedback {
  std::string patch_result = "not measured";
  std::string scene_result = "none yet";
};

/// Canonical and alternative robust features per detector class.
class FeatureTemplates {
 public:
  explicit FeatureTemplates(const json& doc);
  static FeatureTemplates load(const AssetStore& assets);

  [[nodiscard]] bool knows(const std::string& target_class) const;
  [[nodiscard]] const std::map<Feature, std::string>& canonical(const std::string& target_class) const;
  [[nodiscard]] const std::vector<std::string>& alternatives(const std::string& target_class,
                                                             Feature feature) const;

 private:
  struct Entry {
    std::map<Feature, std::string> canonical;
    std::map<Feature, std::vector<std::string>> alternatives;
  };
  [[nodiscard]] const Entry& entry(const std::string& target_class) const;

  std::map<std::string, Entry> classes_;
  Entry generic_;
};

/// NDDA-style starting prompt: canonical features, with every feature in
/// `removal` swapped for an alternative. Seed 0 takes the first alternative;
/// other seeds pick one by hash(class, feature, removal, seed).
PromptSpec initial_prompt(const AttackObjective& objective, const std::set<Feature>& removal,
                          std::uint64_t seed, const FeatureTemplates& templates);

SceneDescription describe_scene(const SceneImage& scene, const std::string& target_class,
                                ChatBackend& llm, const AgentSettings& settings);

enum class RefineMode {
  full,             // directives, then LLM rewrite of other features and background
  directives_only,  // rule engine only
  frozen,           // prompt never changes
};

/// Applies gagent directives in rank order (stable for equal ranks).
/// Refine appends its detail unless the feature already mentions it.
/// Throws std::invalid_argument for dagent or placement directives.
PromptSpec apply_directives(PromptSpec spec, const std::vector<RefineDirective>& directives);

PromptSpec refine_prompt(const PromptSpec& prev, const SceneDescription& scene_desc,
                         const std::vector<RefineDirective>& directives, RefineMode mode,
                         ChatBackend* llm, const AgentSettings& settings,
                         const RasterRgba* prev_patch = nullptr,
                         const DetectionFeedback& feedback = {});

Patch generate_patch(const PromptSpec& spec, TextToImage& t2i, std::uint64_t seed, int generation,
                     int size_px);

}  // namespace magic::gagent
