#include "magic/eagent.hpp"

#include <algorithm>
#include <cstdio>

#include <spdlog/spdlog.h>

namespace magic::eagent {

double target_score(const std::vector<Detection>& detections, const std::string& target_class,
                    const BBox& plan_box, const DetectionGate& gate) {
  double best = 0.0;
  for (const auto& d : detections) {
    if (d.label != target_class) continue;
    if (gate.location_gate && iou(d.bbox, plan_box) < gate.min_iou) continue;
    best = std::max(best, d.confidence);
  }
  return best;
}

DetectionResult evaluate_detection(const SceneImage& composite, const DeploymentPlan& plan,
                                   const AttackObjective& objective, Detector& detector,
                                   const std::string& model_id, const DetectionGate& gate) {
  DetectionResult r;
  r.evidence = detector.detect(composite, model_id, 0.0);
  r.delta_s = target_score(r.evidence, objective.target_class, plan.bbox, gate);
  r.hit = r.delta_s >= gate.theta;
  return r;
}

namespace {

std::string bbox_text(const BBox& b) {
  return "[" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " + std::to_string(b.w) + ", " +
         std::to_string(b.h) + "]";
}

}  // namespace

NaturalityResult evaluate_naturality(const SceneImage& composite, const DeploymentPlan& plan,
                                     ChatBackend& vlm, double delta, const AgentSettings& settings) {
  const auto& assets = assets_of(settings);
  const std::map<std::string, std::string> slots{{"BBOX", bbox_text(plan.bbox)}};
  auto request = make_request(settings, fill_template(assets.text("prompts/eagent_naturality.txt"), slots),
                              fill_template(assets.text("prompts/tasks/naturality.txt"), slots),
                              {encode_png(composite.pixels, {settings.png_compression, 0})});
  auto check = [](const json& j) {
    std::vector<std::string> problems;
    if (!j.contains("score") || !j["score"].is_number()) {
      problems.emplace_back("score must be an integer from 0 to 100");
    } else if (const double s = j["score"].get<double>(); !(s >= 0.0 && s <= 100.0)) {
      problems.emplace_back("score must be an integer from 0 to 100");
    }
    return problems;
  };
  const json reply = ask_structured_or_throw(vlm, settings, std::move(request), check, "naturality");
  NaturalityResult r;
  r.score = reply["score"].get<double>() / 100.0;
  r.pass = r.score >= delta;
  if (reply.contains("rationale") && reply["rationale"].is_string()) r.rationale = reply["rationale"];
  return r;
}

IterationVerdict decide(double delta_s, double naturality, double theta, double delta, int iteration,
                        int max_iterations) {
  IterationVerdict v;
  v.delta_s = delta_s;
  v.naturality = naturality;
  v.theta = theta;
  v.delta = delta;
  const bool hit = delta_s >= theta;
  const bool natural = naturality >= delta;
  if (hit && natural) v.decision = Decision::accept;
  else if (iteration >= max_iterations) v.decision = Decision::give_up;
  else if (!hit && !natural) v.decision = Decision::refine_both;
  else if (!hit) v.decision = Decision::refine_prompt;
  else v.decision = Decision::refine_plan;
  return v;
}

std::vector<std::string> directive_problems(const RefineDirective& d, Decision decision) {
  std::vector<std::string> out;
  if (d.target == DirectiveTarget::dagent && d.feature != DirectiveFeature::placement) {
    out.emplace_back("dagent directives must target placement");
  }
  if (d.target == DirectiveTarget::gagent && d.feature == DirectiveFeature::placement) {
    out.emplace_back("placement directives belong to dagent");
  }
  if (decision == Decision::refine_prompt && d.target != DirectiveTarget::gagent) {
    out.emplace_back("decision refine_prompt only takes prompt directives");
  }
  if (decision == Decision::refine_plan && d.target != DirectiveTarget::dagent) {
    out.emplace_back("decision refine_plan only takes placement directives");
  }
  if (decision == Decision::accept || decision == Decision::give_up) {
    out.emplace_back("no directives after " + to_string(decision));
  }
  return out;
}

std::vector<RefineDirective> sanitize_suggestions(const json& suggestions, Decision decision,
                                                  const std::string& subject) {
  struct Ranked {
    RefineDirective d;
    std::size_t order;
  };
  std::vector<Ranked> kept;
  if (!suggestions.is_array()) return {};
  for (std::size_t i = 0; i < suggestions.size(); ++i) {
    const json& s = suggestions[i];
    auto drop = [&](const std::string& why) { spdlog::debug("dropping suggestion {}: {}", i + 1, why); };
    if (!s.is_object()) {
      drop("not an object");
      continue;
    }
    const std::string text = s.value("suggestion", std::string{});
    const std::string feature = s.value("feature", std::string{});
    const std::string detail = s.value("detail", std::string{});
    if (to_lower(feature) == "subject" || to_lower(text).find("subject") != std::string::npos) {
      drop("the subject is immutable");
      continue;
    }
    auto target = parse_enum<DirectiveTarget>(s.value("target", std::string{}));
    auto kind = parse_enum<DirectiveKind>(s.value("kind", std::string{}));
    auto feat = parse_enum<DirectiveFeature>(feature);
    if (!target || !kind || !feat) {
      drop("unknown target, kind or feature");
      continue;
    }
    RefineDirective d{*target, *kind, *feat, detail, 0};
    d.rank = s.contains("rank") && s["rank"].is_number_integer() ? s["rank"].get<int>()
                                                                  : static_cast<int>(i) + 1;
    if (d.target == DirectiveTarget::gagent && !subject.empty() &&
        (d.kind == DirectiveKind::replace || d.kind == DirectiveKind::refine) &&
        to_lower(detail) == to_lower(subject)) {
      drop("detail restates the subject");
      continue;
    }
    if (auto problems = directive_problems(d, decision); !problems.empty()) {
      drop(problems.front());
      continue;
    }
    kept.push_back({d, i});
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Ranked& a, const Ranked& b) { return a.d.rank < b.d.rank; });
  std::vector<RefineDirective> out;
  for (const auto& k : kept) {
    const bool dup = std::any_of(out.begin(), out.end(), [&](const RefineDirective& o) {
      return o.target == k.d.target && o.feature == k.d.feature;
    });
    if (!dup) out.push_back(k.d);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

std::vector<RefineDirective> make_directives(const DirectiveContext& ctx, ChatBackend& llm,
                                             const AgentSettings& settings) {
  if (ctx.decision == Decision::accept) throw std::invalid_argument("no directives for an accepted verdict");
  if (ctx.decision == Decision::give_up) return {};
  const auto& assets = assets_of(settings);

  char scores[128];
  std::snprintf(scores, sizeof scores, "detection score %.4f, naturality %.2f", ctx.delta_s, ctx.naturality);
  std::string analysis = "decision: " + to_string(ctx.decision) + "; " + scores;
  if (!ctx.naturality_rationale.empty()) analysis += "; naturality notes: " + ctx.naturality_rationale;
  analysis += "; detections: " + json(ctx.evidence).dump();

  const std::string system =
      fill_template(assets.text("prompts/eagent.txt"),
                    {{"PIPELINE", pipeline_text(assets, ctx.prompt.subject)},
                     {"ROBUST_FEATURE", assets.text("prompts/robust_feature_definition.txt")},
                     {"RULE", assets.text("prompts/rule.txt")},
                     {"G&D_ANAL", analysis}});
  const std::string user = fill_template(assets.text("prompts/tasks/directives.txt"),
                                         {{"DECISION", to_string(ctx.decision)},
                                          {"CURRENT_PROMPT", render_prompt(ctx.prompt)},
                                          {"CURRENT_PROMPT_PARTS", json(ctx.prompt).dump()},
                                          {"PLAN", json(ctx.plan).dump()}});
  std::vector<std::string> images;
  if (ctx.patch) images.push_back(encode_png(*ctx.patch, {settings.png_compression, 0}));
  if (ctx.composite) images.push_back(encode_png(ctx.composite->pixels, {settings.png_compression, 0}));

  auto check = [](const json& j) {
    std::vector<std::string> problems;
    if (!j.contains("suggestions") || !j["suggestions"].is_array()) {
      problems.emplace_back("suggestions must be a list");
    }
    return problems;
  };
  const json reply = ask_structured_or_throw(llm, settings, make_request(settings, system, user, std::move(images)),
                                             check, "directives");
  return sanitize_suggestions(reply["suggestions"], ctx.decision, ctx.prompt.subject);
}

}  // namespace magic::eagent
