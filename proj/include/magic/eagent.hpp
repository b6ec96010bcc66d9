#pragma once

#include <string>
#include <vector>

#include "magic/agent_io.hpp"
#include "magic/domain.hpp"

namespace magic::eagent {

struct DetectionResult {
  double delta_s = 0.0;
  bool hit = false;
  std::vector<Detection> evidence;  // everything the detector returned
};

struct DetectionGate {
  double theta = 0.5;
  bool location_gate = true;
  double min_iou = 0.1;
};

/// Highest target-class confidence among detections overlapping the plan box
/// (IoU >= min_iou when the location gate is on).
double target_score(const std::vector<Detection>& detections, const std::string& target_class,
                    const BBox& plan_box, const DetectionGate& gate);

DetectionResult evaluate_detection(const SceneImage& composite, const DeploymentPlan& plan,
                                   const AttackObjective& objective, Detector& detector,
                                   const std::string& model_id, const DetectionGate& gate);

struct NaturalityResult {
  double score = 0.0;  // [0, 1]
  bool pass = false;
  std::string rationale;
};

NaturalityResult evaluate_naturality(const SceneImage& composite, const DeploymentPlan& plan,
                                     ChatBackend& vlm, double delta, const AgentSettings& settings);

IterationVerdict decide(double delta_s, double naturality, double theta, double delta, int iteration,
                        int max_iterations);

/// Whether a directive can be applied for this decision and keeps the subject.
std::vector<std::string> directive_problems(const RefineDirective& d, Decision decision);

struct DirectiveContext {
  Decision decision = Decision::refine_both;
  PromptSpec prompt;
  DeploymentPlan plan;
  std::vector<Detection> evidence;
  double delta_s = 0.0;
  double naturality = 0.0;
  std::string naturality_rationale;
  const RasterRgba* patch = nullptr;
  const SceneImage* composite = nullptr;
};

/// Parses raw suggestion objects into legal directives: illegal ones are
/// dropped and logged, duplicates by (target, feature) keep the best rank,
/// and ranks are renumbered 1..n.
std::vector<RefineDirective> sanitize_suggestions(const json& suggestions, Decision decision,
                                                  const std::string& subject);

std::vector<RefineDirective> make_directives(const DirectiveContext& context, ChatBackend& llm,
                                             const AgentSettings& settings);

}  // namespace magic::eagent
