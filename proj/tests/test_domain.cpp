#include <doctest.h>

#include "magic/domain.hpp"
#include "support.hpp"

using namespace magic;

namespace {

bool has_message(const std::vector<Violation>& v, const std::string& msg) {
  for (const auto& x : v)
    if (x.message == msg) return true;
  return false;
}

PromptSpec stop_sign(std::string shape, std::string color, std::string text) {
  PromptSpec s;
  s.subject = "stop sign";
  s.robust_features = {{Feature::shape, std::move(shape)}, {Feature::color, std::move(color)},
                       {Feature::text, std::move(text)}};
  return s;
}

}  // namespace

TEST_SUITE("domain") {
  TEST_CASE("default config is valid") { CHECK(validate(RunConfig{}).empty()); }

  TEST_CASE("config bounds are reported with field paths") {
    RunConfig c;
    c.theta = 1.5;
    auto v = validate(c);
    REQUIRE(v.size() == 1);
    CHECK(v[0].field == "theta");
    CHECK(v[0].message == "theta ∉ (0,1]");

    c = RunConfig{};
    c.eval_trials = 0;
    CHECK(has_message(validate(c), "eval_trials ≥ 1"));

    c = RunConfig{};
    c.delta = 0.0;
    c.max_iterations = 0;
    c.eval_conf_thresholds = {0.5, 1.2};
    c.backends.mode = "cloud";
    v = validate(c);
    CHECK(v.size() == 4);
    CHECK(v[0].field == "delta");
    CHECK(v[1].field == "max_iterations");
    CHECK(v[2].field == "eval_conf_thresholds/1");
    CHECK(v[3].field == "backends/mode");
  }

  TEST_CASE("objective must name a detector label") {
    CHECK(validate(AttackObjective{"stop sign", ""}).empty());
    CHECK_FALSE(validate(AttackObjective{"", ""}).empty());
    CHECK_FALSE(validate(AttackObjective{"unicorn", ""}).empty());
    CHECK(detector_labels().size() == 80);
  }

  TEST_CASE("render_prompt, canonical stop sign") {
    CHECK(render_prompt(stop_sign("octagonal", "red", "'STOP'")) == "an octagonal red stop sign with the text 'STOP'");
  }

  TEST_CASE("render_prompt keeps altered features") {
    const auto text = render_prompt(stop_sign("square", "blue", "'HELLO'"));
    CHECK(text.find("blue") != std::string::npos);
    CHECK(text.find("square") != std::string::npos);
    CHECK(text.find("'HELLO'") != std::string::npos);
    CHECK(render_prompt(stop_sign("square", "blue", "'HELLO'")) == text);
  }

  TEST_CASE("render_prompt joins the four parts") {
    PromptSpec s = stop_sign("round", "green", "'GO'");
    s.robust_features[Feature::pattern] = "a checkered border";
    s.other_features = {"printed on canvas"};
    s.background = "a brick wall";
    CHECK(render_prompt(s) ==
          "a round green stop sign with the text 'GO' and a checkered border, printed on canvas, a brick wall");
  }

  TEST_CASE("render_prompt never emits a removed feature") {
    PromptSpec s = stop_sign("octagonal", "red", "'STOP'");
    s.removed = {Feature::text};
    CHECK(render_prompt(s).find("STOP") == std::string::npos);
    CHECK_FALSE(check_prompt_spec(s).empty());  // present and removed at once
    s.robust_features.erase(Feature::text);
    CHECK(check_prompt_spec(s).empty());
  }

  TEST_CASE("iou") {
    CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
    CHECK(iou({0, 0, 10, 10}, {20, 20, 5, 5}) == 0.0);
    CHECK(iou({0, 0, 10, 10}, {5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
    CHECK(iou({0, 0, 0, 10}, {0, 0, 10, 10}) == 0.0);
  }

  TEST_CASE("json round trips") {
    DeploymentPlan p{DeployMethod::hang, 10, 0.93, 0.4, 0.05, -12.5, {110, 30, 7, 7}, "pole"};
    CHECK(json(p).get<DeploymentPlan>() == p);
    CHECK(json(p)["bbox_px"] == json::array({110, 30, 7, 7}));

    PromptSpec s = stop_sign("square", "blue", "'HELLO'");
    s.removed = {Feature::pattern};
    s.other_features = {"x"};
    CHECK(json(s).get<PromptSpec>() == s);

    RefineDirective d{DirectiveTarget::gagent, DirectiveKind::remove, DirectiveFeature::text, "", 1};
    CHECK(json(d)["kind"] == "delete");
    CHECK(json(d).get<RefineDirective>() == d);

    IterationVerdict v{0.8, 0.9, 0.5, 0.7, Decision::accept, {d}};
    CHECK(json(v).get<IterationVerdict>() == v);

    RunConfig c;
    c.rng_seed = 18446744073709551615ULL;
    c.ablation_mode = AblationMode::gagent_naive_eagent_ae;
    c.initial_removal = {Feature::shape, Feature::color};
    CHECK(json(c).get<RunConfig>() == c);
    CHECK(json::object().get<RunConfig>() == RunConfig{});
  }

  TEST_CASE("strict enum parsing") {
    CHECK(parse_ablation_mode("gagent_naive") == AblationMode::gagent_naive);
    CHECK_FALSE(parse_ablation_mode("naive").has_value());
    CHECK(parse_feature("pattern") == Feature::pattern);
    CHECK_FALSE(parse_feature("placement").has_value());
    CHECK(parse_enum<Decision>("refine_both") == Decision::refine_both);
    CHECK_FALSE(parse_enum<Decision>("maybe").has_value());
  }
}
