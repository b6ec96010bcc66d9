#include <doctest.h>

#include <fstream>

#include "magic/dagent.hpp"
#include "magic/harness.hpp"
#include "magic/mock_backends.hpp"
#include "support.hpp"

using namespace magic;
using namespace magic::harness;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(MAGIC_FIXTURE_DIR) / "env1";
const std::vector<std::string> kDetectors = {"yolov5", "rtdetr", "yolov10"};

TrialRecord record(double confidence, std::string label = "stop sign", BBox box = {100, 100, 50, 50}) {
  TrialRecord r;
  r.trial_id = "t";
  r.condition = "magic";
  r.detector_id = "yolov5";
  r.plan.bbox = {100, 100, 50, 50};
  if (confidence >= 0) r.detections.push_back({std::move(label), confidence, box});
  return r;
}

// Integer oracle: floor(10000 * s / n) / 100.
double asr_oracle(long s, long n) { return static_cast<double>(10000 * s / n) / 100.0; }

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("ASR examples") {
    std::vector<TrialRecord> rs;
    for (int i = 0; i < 50; ++i) rs.push_back(record(i < 44 ? 0.9 : 0.1));
    CHECK(asr(rs, "stop sign", 0.5) == 88.0);
    CHECK(asr(rs, "stop sign", 0.95) == 0.0);
    CHECK(successes(rs, "stop sign", {0.5, true, 0.1}) == 44);

    std::vector<TrialRecord> thirds = {record(0.9), record(0.1), record(0.1)};
    CHECK(asr(thirds, "stop sign", 0.5) == 33.33);
    thirds[1] = record(0.9);
    CHECK(asr(thirds, "stop sign", 0.5) == 66.66);

    CHECK_THROWS_AS(asr({}, "stop sign", 0.5), std::invalid_argument);
    CHECK_THROWS_AS(asr(rs, "stop sign", 1.5), std::invalid_argument);
  }

  TEST_CASE("success needs the target label, the threshold and the location") {
    CHECK(trial_success(record(0.5), "stop sign", {0.5, true, 0.1}));
    CHECK_FALSE(trial_success(record(0.4999), "stop sign", {0.5, true, 0.1}));
    CHECK_FALSE(trial_success(record(0.9, "car"), "stop sign", {0.5, true, 0.1}));
    CHECK_FALSE(trial_success(record(-1), "stop sign", {0.5, true, 0.1}));
    const auto far = record(0.9, "stop sign", {0, 0, 20, 20});
    CHECK_FALSE(trial_success(far, "stop sign", {0.5, true, 0.1}));
    CHECK(trial_success(far, "stop sign", {0.5, false, 0.1}));
  }

  TEST_CASE("ASR matches the integer oracle") {
    for (int n = 1; n <= 120; ++n)
      for (int s = 0; s <= n; ++s) {
        std::vector<TrialRecord> rs;
        for (int i = 0; i < n; ++i) rs.push_back(record(i < s ? 0.9 : 0.2));
        REQUIRE_MESSAGE(asr(rs, "stop sign", 0.5) == asr_oracle(s, n), s, "/", n);
      }
  }

  TEST_CASE("build_table averages, orders and flags") {
    const auto t = build_table({{"magic", {{"yolov5", 88.0}, {"rtdetr", 80.0}, {"yolov10", 74.0}}},
                                {"ndda_rand", {{"yolov5", 23.0}, {"rtdetr", 23.0}, {"yolov10", 10.0}}},
                                {"ndda_dagent", {{"yolov5", 48.0}, {"rtdetr", 51.0}, {"yolov10", 33.0}}}},
                               kDetectors, {"ndda_rand", "ndda_dagent", "magic"}, 0.5);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].condition == "ndda_rand");
    CHECK(t.rows[2].condition == "magic");
    CHECK(t.rows[2].cells[3].value == 80.66);
    CHECK(t.rows[0].cells[3].value == 18.66);
    CHECK(t.rows[2].cells[0].best);
    CHECK(t.rows[1].cells[0].second);
    CHECK_FALSE(t.rows[0].cells[0].best);
    CHECK(t.to_markdown().find("**80.66%**") != std::string::npos);
    CHECK(t.to_json()["rows"][2]["cells"][3]["asr"] == "80.66");

    const auto single = build_table({{"magic", {{"yolov5", 56.0}, {"rtdetr", 74.0}, {"yolov10", 46.0}}}}, kDetectors);
    CHECK(single.rows[0].cells[3].value == 58.66);
    CHECK(single.rows[0].cells[3].best);
    CHECK_FALSE(single.rows[0].cells[3].second);

    CHECK_THROWS_AS(build_table({}, kDetectors), std::invalid_argument);
    CHECK_THROWS_AS(build_table({{"magic", {{"yolov5", 1.0}}}}, kDetectors), std::invalid_argument);
  }

  TEST_CASE("shipped fixture replays") {
    const auto rs = replay(kFixtures / "magic_yolov5.jsonl");
    REQUIRE(rs.size() == 50);
    for (const auto& r : rs) {
      CHECK(check_record(r).empty());
      CHECK(r.condition == "magic");
      CHECK(r.detector_id == "yolov5");
    }
    CHECK(asr(rs, "stop sign", 0.5) == 88.0);
    CHECK(asr(rs, "stop sign", 0.8) == 56.0);
  }

  TEST_CASE("fixture tables reproduce the published rows") {
    const auto sets = group_by_row([] {
      std::vector<TrialRecord> all;
      for (const auto& [c, per] : load_fixture_dir(kFixtures))
        for (const auto& [d, rs] : per) all.insert(all.end(), rs.begin(), rs.end());
      return all;
    }());
    const auto t05 = table_at(sets, "stop sign", kDetectors, {0.5, true, 0.1});
    const auto t08 = table_at(sets, "stop sign", kDetectors, {0.8, true, 0.1});
    REQUIRE(t05.rows.size() == 11);
    CHECK(t05.rows.front().condition == "ndda_rand[shape]");
    CHECK(t05.rows.back().condition == "magic");
    auto values = [](const TableRow& r) {
      std::vector<double> v;
      for (const auto& c : r.cells) v.push_back(c.value);
      return v;
    };
    CHECK(values(t05.rows.back()) == std::vector<double>{88.0, 80.0, 74.0, 80.66});
    CHECK(values(t08.rows.back()) == std::vector<double>{56.0, 74.0, 46.0, 58.66});
    CHECK(values(t05.rows[1]) == std::vector<double>{15.0, 48.0, 6.0, 23.0});    // ndda_rand[color]
    CHECK(values(t05.rows[2]) == std::vector<double>{46.0, 56.0, 30.0, 44.0});   // ndda_rand[text]
    CHECK(values(t05.rows[4]) == std::vector<double>{8.66, 9.33, 4.66, 7.55});   // ndda_rand[all]
    CHECK(values(t08.rows[4]) == std::vector<double>{2.66, 4.66, 3.0, 3.44});
    CHECK(values(t05.rows[6]) == std::vector<double>{47.0, 57.0, 36.0, 46.66});  // ndda_dagent[pattern]
    CHECK(t05.rows.back().cells[3].best);
  }

  TEST_CASE("the location gate only ever removes successes") {
    for (const auto& [c, per] : load_fixture_dir(kFixtures))
      for (const auto& [d, rs] : per) {
        CHECK(successes(rs, "stop sign", {0.5, true, 0.1}) <= successes(rs, "stop sign", {0.5, false, 0.1}));
      }
  }

  TEST_CASE("bad records are reported with their line") {
    test::TempDir tmp("harness");
    auto rs = replay(kFixtures / "magic_rtdetr.jsonl");
    rs.resize(3);
    write_records(tmp.path() / "ok.jsonl", rs);
    CHECK(replay(tmp.path() / "ok.jsonl") == rs);

    json bad = rs[1];
    bad["detections"] = json::array({{{"label", "stop sign"}, {"confidence", 1.3}, {"bbox", {1, 1, 2, 2}}}});
    {
      std::ofstream out(tmp.path() / "bad.jsonl");
      out << json(rs[0]).dump() << "\n" << bad.dump() << "\n";
    }
    CHECK_THROWS_WITH_AS(replay(tmp.path() / "bad.jsonl"), doctest::Contains("bad.jsonl:2: "), std::runtime_error);

    {
      std::ofstream out(tmp.path() / "cond.jsonl");
      json c = rs[0];
      c["condition"] = "ablation:nonsense";
      out << "\n" << c.dump() << "\n";
    }
    CHECK_THROWS_WITH_AS(replay(tmp.path() / "cond.jsonl"), doctest::Contains(":2: unknown condition"),
                         std::runtime_error);
    CHECK_THROWS_AS(replay(tmp.path() / "none.jsonl"), std::runtime_error);
    CHECK_THROWS_AS(load_fixture_dir(tmp.path() / "absent"), std::runtime_error);
  }

  TEST_CASE("property: ASR is monotone in the threshold and additive over concatenation") {
    Rng rng(99);
    const char* labels[] = {"stop sign", "car", "person"};
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<TrialRecord> rs;
      for (int i = 0, n = 1 + static_cast<int>(rng.below(60)); i < n; ++i) {
        TrialRecord r = record(-1);
        for (int k = 0, m = static_cast<int>(rng.below(4)); k < m; ++k) {
          const BBox box = rng.below(4) == 0 ? BBox{0, 0, 10, 10} : BBox{100, 100, 50, 50};
          r.detections.push_back({labels[rng.below(3)], rng.uniform01(), box});
        }
        sort_by_confidence(r.detections);
        rs.push_back(std::move(r));
      }
      const double lo = rng.uniform01();
      const double hi = lo + (1 - lo) * rng.uniform01();
      REQUIRE(asr(rs, "stop sign", hi) <= asr(rs, "stop sign", lo));

      const std::size_t cut = rng.below(rs.size() + 1);
      const std::vector<TrialRecord> a(rs.begin(), rs.begin() + static_cast<long>(cut));
      const std::vector<TrialRecord> b(rs.begin() + static_cast<long>(cut), rs.end());
      const SuccessRule rule{lo, true, 0.1};
      REQUIRE(successes(a, "stop sign", rule) + successes(b, "stop sign", rule) == successes(rs, "stop sign", rule));
    }
  }

  TEST_CASE("run_condition: one record per patch, deterministic placements") {
    auto backends = make_mock_backends();
    const auto scene = test::make_scene(300, 240, 4, "env");
    std::vector<Patch> patches;
    for (int i = 0; i < 5; ++i)
      patches.push_back(Patch{test::solid_rgba(64, 64, static_cast<std::uint8_t>(20 * i), 90, 200), {}, 0, 0});
    for (const char* condition : {"ndda_rand", "ndda_dagent"}) {
      ConditionSetup setup;
      setup.condition = condition;
      setup.detector_id = "yolov5";
      setup.objective = {"stop sign", ""};
      setup.seed = 17;
      const auto a = run_condition(scene, patches, setup, backends, test::settings());
      const auto b = run_condition(scene, patches, setup, backends, test::settings());
      CHECK(a == b);
      REQUIRE(a.size() == 5);
      const auto regions = dagent::catalog_regions(scene, *backends.segmenter, dagent::SurfaceTable::load(test::assets()));
      for (const auto& r : a) {
        CHECK(r.condition == condition);
        CHECK(r.plan.bbox.x >= 0);
        CHECK(r.plan.bbox.right() <= scene.width());
        CHECK(r.plan.bbox.bottom() <= scene.height());
        // Random placement ignores surface rules; the agent must respect them.
        if (std::string(condition) == "ndda_dagent") {
          const auto problems = dagent::validate_plan(r.plan, scene.width(), scene.height(), 1.0, regions);
          CHECK_MESSAGE(problems.empty(), json(problems).dump());
        }
      }
    }
    ConditionSetup bad;
    bad.condition = "magic_plus";
    CHECK_THROWS_AS(run_condition(scene, patches, bad, backends, test::settings()), std::invalid_argument);
  }

  TEST_CASE("run_condition keeps partial records on backend failure") {
    class FlakyDetector final : public Detector {
     protected:
      std::vector<Detection> do_detect(const SceneImage&, const std::string&, double) override {
        if (++calls_ == 3) throw BackendError(BackendErrorKind::malformed_response, "bad reply");
        return {};
      }

     private:
      int calls_ = 0;
    };
    auto backends = make_mock_backends();
    backends.detector = std::make_shared<FlakyDetector>();
    std::vector<Patch> patches(5, Patch{test::solid_rgba(64, 64, 1, 2, 3), {}, 0, 0});
    ConditionSetup setup;
    setup.condition = "ndda_rand";
    setup.detector_id = "yolov5";
    setup.objective = {"stop sign", ""};
    std::vector<TrialRecord> partial;
    CHECK_THROWS_AS(run_condition(test::make_scene(200, 200), patches, setup, backends, test::settings(), &partial),
                    BackendError);
    CHECK(partial.size() == 2);
  }
}
