#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "magic/compositor.hpp"
#include "magic/dagent.hpp"
#include "magic/mock_backends.hpp"
#include "support.hpp"

using namespace magic;
using namespace magic::dagent;

namespace {

const SurfaceTable& table() {
  static const SurfaceTable t = SurfaceTable::load(test::assets());
  return t;
}

std::vector<Region> mock_catalog(int w, int h) {
  MockSegmenter seg;
  return catalog_regions(test::make_scene(w, h), seg, table());
}

DeploymentPlan centred_paint(int region_index, double ax, double ay, double scale, int w, int h) {
  DeploymentPlan p;
  p.method = DeployMethod::paint;
  p.region_index = region_index;
  p.anchor_x = ax;
  p.anchor_y = ay;
  p.scale = scale;
  return with_bbox(p, w, h, 1.0);
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

Patch square_patch(int side = 64) { return Patch{test::solid_rgba(side, side, 9, 99, 199), {}, 0, 0}; }

}  // namespace

TEST_SUITE("dagent") {
  TEST_CASE("surface table lookup") {
    CHECK(table().lookup("wall") == std::pair{SurfaceKind::flat_surface, Facing::forward});
    CHECK(table().lookup("Side Wall") == std::pair{SurfaceKind::flat_surface, Facing::oblique});
    CHECK(table().lookup("old brick wall") == std::pair{SurfaceKind::flat_surface, Facing::forward});
    CHECK(table().lookup("metal pole") == std::pair{SurfaceKind::vertical_pole, Facing::forward});
    CHECK(table().lookup("cloud") == std::pair{SurfaceKind::other, Facing::unknown});
  }

  TEST_CASE("catalog of the mock segmenter") {
    const auto regions = mock_catalog(900, 900);
    REQUIRE(regions.size() == 10);
    for (std::size_t i = 0; i < regions.size(); ++i) CHECK(regions[i].index == static_cast<int>(i + 1));
    CHECK(regions[4].surface_kind == SurfaceKind::flat_surface);
    CHECK(regions[4].facing == Facing::forward);
    CHECK(regions[7].facing == Facing::oblique);
    CHECK(regions[9].surface_kind == SurfaceKind::vertical_pole);
  }

  TEST_CASE("catalog re-indexes and rejects empty segmentations") {
    MockSegmenter seg({{7, {0, 0, 4, 4}, "wall", SurfaceKind::other, Facing::unknown},
                       {9, {4, 0, 4, 4}, "road", SurfaceKind::other, Facing::unknown}});
    const auto regions = catalog_regions(test::make_scene(8, 8), seg, table());
    CHECK(regions[0].index == 1);
    CHECK(regions[1].index == 2);
    CHECK(regions[1].facing == Facing::oblique);

    struct Empty final : Segmenter {
      std::vector<Region> do_segment(const SceneImage&) override { return {}; }
    } empty;
    CHECK_THROWS_WITH_AS(catalog_regions(test::make_scene(8, 8), empty, table()), "no deployable regions",
                         std::runtime_error);
  }

  TEST_CASE("validate_plan: a centred small paint is valid") {
    const auto regions = mock_catalog(900, 900);
    CHECK(validate_plan(centred_paint(5, 0.5, 0.5, 0.1, 900, 900), 900, 900, 1.0, regions).empty());
  }

  TEST_CASE("validate_plan: each constraint") {
    const auto regions = mock_catalog(900, 900);
    auto p = centred_paint(5, 0.5, 0.5, 0.9, 900, 900);
    CHECK(contains(validate_plan(p, 900, 900, 1.0, regions), "scale ∉ [0.02, 0.5]"));

    p = centred_paint(8, 0.5, 0.83, 0.1, 900, 900);  // pavement row is oblique
    CHECK(validate_plan(p, 900, 900, 1.0, regions) == std::vector<std::string>{"forward-facing required"});

    p = centred_paint(5, 0.5, 0.5, 0.1, 900, 900);
    p.method = DeployMethod::hang;
    CHECK(validate_plan(p, 900, 900, 1.0, regions) ==
          std::vector<std::string>{"hang requires a vertical_pole or horizontal_beam region"});

    p = centred_paint(5, 0.3, 0.5, 0.1, 900, 900);
    CHECK(validate_plan(p, 900, 900, 1.0, regions) == std::vector<std::string>{"bbox not inside region 5 (occlusion)"});

    p = centred_paint(42, 0.5, 0.5, 0.1, 900, 900);
    CHECK(validate_plan(p, 900, 900, 1.0, regions) == std::vector<std::string>{"region 42 does not exist"});

    p = centred_paint(5, 0.5, 0.5, 0.1, 900, 900);
    p.rotation_deg = 60;
    p = with_bbox(p, 900, 900, 1.0);
    CHECK(contains(validate_plan(p, 900, 900, 1.0, regions), "rotation ∉ [-45, 45]"));

    p = centred_paint(5, 0.5, 0.5, 0.1, 900, 900);
    p.bbox.x += 1;
    CHECK(validate_plan(p, 900, 900, 1.0, regions) == std::vector<std::string>{"bbox_px does not match the placement"});

    p = centred_paint(1, 0.01, 0.01, 0.1, 900, 900);
    const auto v = validate_plan(p, 900, 900, 1.0, regions);
    CHECK(v.front() == "bbox outside the scene");

    p.anchor_x = 1.5;
    CHECK(contains(validate_plan(p, 900, 900, 1.0, regions), "anchor ∉ [0,1]²"));
  }

  TEST_CASE("validate_plan is pure and order-stable") {
    const auto regions = mock_catalog(300, 200);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      DeploymentPlan p;
      p.method = rng.below(2) ? DeployMethod::hang : DeployMethod::paint;
      p.region_index = static_cast<int>(rng.below(12));
      p.anchor_x = rng.uniform(-0.1, 1.1);
      p.anchor_y = rng.uniform(-0.1, 1.1);
      p.scale = rng.uniform(0.0, 0.7);
      p.rotation_deg = rng.uniform(-60, 60);
      CHECK(validate_plan(p, 300, 200, 1.0, regions) == validate_plan(p, 300, 200, 1.0, regions));
    }
  }

  TEST_CASE("random_plan: reproducible, inside the scene, unconstrained surfaces") {
    const auto regions = mock_catalog(900, 900);
    Rng a(1), b(1);
    CHECK(random_plan(900, 900, 1.0, regions, a) == random_plan(900, 900, 1.0, regions, b));
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
      const auto p = random_plan(900, 900, 1.0, regions, rng);
      REQUIRE(p.bbox.inside(900, 900));
      CHECK(p.rotation_deg == 0.0);
      CHECK(p.rationale == "random");
      CHECK(p.bbox == compositor::plan_to_bbox(p, 900, 900, 1.0));
    }
  }

  TEST_CASE("random_plan stays inside extreme scenes") {
    for (auto [w, h, aspect] : {std::tuple{1000, 60, 1.0}, std::tuple{60, 1000, 1.0}, std::tuple{128, 96, 0.5}}) {
      MockSegmenter seg;
      const auto regions = catalog_regions(test::make_scene(w, h), seg, table());
      Rng rng(5);
      for (int i = 0; i < 300; ++i) REQUIRE(random_plan(w, h, aspect, regions, rng).bbox.inside(w, h));
    }
  }

  TEST_CASE("fallback on the mock catalog paints the largest forward cell") {
    const auto regions = mock_catalog(900, 900);
    const auto p = best_valid_fallback(900, 900, 1.0, regions);
    CHECK(p.method == DeployMethod::paint);
    CHECK(p.region_index == 1);  // equal areas: the first forward cell
    CHECK(p.rationale == "fallback");
    CHECK(p.scale == doctest::Approx(0.2));
    CHECK(validate_plan(p, 900, 900, 1.0, regions).empty());
  }

  TEST_CASE("fallback hangs on the tallest pole when no wall faces forward") {
    const std::vector<Region> regions = {
        {1, {0, 0, 100, 100}, "road", SurfaceKind::flat_surface, Facing::oblique},
        {2, {150, 10, 20, 60}, "pole", SurfaceKind::vertical_pole, Facing::forward},
        {3, {180, 10, 20, 90}, "pole", SurfaceKind::vertical_pole, Facing::forward}};
    const auto p = best_valid_fallback(200, 100, 1.0, regions);
    CHECK(p.method == DeployMethod::hang);
    CHECK(p.region_index == 3);
    CHECK(validate_plan(p, 200, 100, 1.0, regions).empty());
    CHECK_THROWS_WITH(best_valid_fallback(200, 100, 1.0, {regions[0]}), "no deployable regions");
    CHECK_THROWS(best_valid_fallback(200, 100, 1.0, {}));
  }

  TEST_CASE("som overlay marks regions") {
    const auto scene = test::make_scene(90, 60);
    const auto regions = mock_catalog(90, 60);
    const auto overlay = som_overlay(scene, regions);
    CHECK(overlay.width == 90);
    CHECK_FALSE(overlay == scene.pixels);
  }

  TEST_CASE("propose_plan returns a valid LLM plan") {
    const auto scene = test::make_scene(900, 900);
    const auto regions = mock_catalog(900, 900);
    MockChat chat;
    chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message,
                   test::fenced({{"method", "paint"}, {"region_index", 5}, {"anchor", {0.5, 0.6}}, {"scale", 0.12},
                                 {"rotation_deg", 0}, {"rationale", "eye level"}})});
    ProposeContext ctx;
    ctx.target_class = "stop sign";
    const auto p = propose_plan(scene, regions, square_patch(), ctx, chat, test::settings());
    CHECK(p.method == DeployMethod::paint);
    CHECK(p.region_index == 5);
    CHECK(p.anchor_y == 0.6);
    CHECK(p.scale == 0.12);
    CHECK(p.bbox == BBox{396, 486, 108, 108});
    CHECK(chat.call_count() == 1);
    CHECK(chat.calls()[0].messages[0].images_png.size() == 2);
  }

  TEST_CASE("propose_plan quotes violations back and falls back") {
    const auto scene = test::make_scene(900, 900);
    const auto regions = mock_catalog(900, 900);
    MockChat chat;
    chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message,
                   test::fenced({{"method", "hang"}, {"region_index", 5}, {"anchor", {0.5, 0.5}}, {"scale", 0.1},
                                 {"rotation_deg", 0}, {"rationale", "x"}})});
    ProposeContext ctx;
    ctx.target_class = "stop sign";
    const auto p = propose_plan(scene, regions, square_patch(), ctx, chat, test::settings());
    CHECK(p.rationale == "fallback");
    CHECK(validate_plan(p, 900, 900, 1.0, regions).empty());
    REQUIRE(chat.call_count() == 3);
    CHECK(chat.calls()[1].messages.back().content.find("hang requires a vertical_pole") != std::string::npos);
  }

  TEST_CASE("propose_plan rejects unknown method names instead of guessing") {
    const auto scene = test::make_scene(300, 300);
    const auto regions = mock_catalog(300, 300);
    MockChat chat;
    chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message,
                   test::fenced({{"method", "glue"}, {"region_index", 5}, {"anchor", {0.5, 0.5}}, {"scale", 0.1}})});
    ProposeContext ctx;
    ctx.target_class = "stop sign";
    CHECK(propose_plan(scene, regions, square_patch(), ctx, chat, test::settings()).rationale == "fallback");
  }
}
