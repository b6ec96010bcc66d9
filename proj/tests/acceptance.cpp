// Acceptance suite: one PASS/FAIL line per primary criterion.
// Runs on mock backends and the shipped fixtures only.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

#include "magic/compositor.hpp"
#include "magic/dagent.hpp"
#include "magic/eagent.hpp"
#include "magic/harness.hpp"
#include "magic/mock_backends.hpp"
#include "magic/orchestrator.hpp"
#include "pipeline_support.hpp"

using namespace magic;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kTableTolerance = 0.0;
constexpr double kTableSeconds = 5.0;
constexpr double kLoopSeconds = 30.0;
constexpr int kLoopScenarios = 100;
constexpr int kResumeRuns = 20;
constexpr int kRandomRecordSets = 1000;
constexpr int kBboxPlans = 1000;
constexpr int kPastePlans = 1000;
constexpr int kLocalityPlans = 1000;
constexpr int kProposeCalls = 1000;
constexpr int kRandomDraws = 1000;
constexpr double kChiSquareCritical = 27.88;  // df = 9, p = 0.001
constexpr int kGateSteps = 20;                // 0.05 grid on [0, 1]

const std::vector<std::string> kDetectors = {"yolov5", "rtdetr", "yolov10"};
const std::string kTarget = "stop sign";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

harness::RecordSets fixture_rows() {
  std::vector<harness::TrialRecord> all;
  for (const auto& [c, per] : harness::load_fixture_dir(fs::path(MAGIC_FIXTURE_DIR) / "env1"))
    for (const auto& [d, rs] : per) all.insert(all.end(), rs.begin(), rs.end());
  return harness::group_by_row(all);
}

// ---------------------------------------------------------------------------

Outcome table_arithmetic() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = fixture_rows();
  const std::vector<double> at05 = {88.00, 80.00, 74.00, 80.66};
  const std::vector<double> at08 = {56.00, 74.00, 46.00, 58.66};
  double worst = 0.0;
  std::string got;
  for (const auto& [threshold, expected] : {std::pair{0.5, at05}, std::pair{0.8, at08}}) {
    const auto table = harness::table_at(rows, kTarget, kDetectors, {threshold, true, 0.1});
    const harness::TableRow* magic_row = nullptr;
    for (const auto& r : table.rows)
      if (r.condition == "magic") magic_row = &r;
    if (!magic_row || magic_row->cells.size() != expected.size()) return {false, "no magic row"};
    got += " @" + num(threshold, 1) + ":";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      worst = std::max(worst, std::abs(magic_row->cells[i].value - expected[i]));
      got += " " + format2(magic_row->cells[i].value);
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kTableTolerance && secs < kTableSeconds,
          "magic row" + got + "; max deviation " + num(worst) + "; " + num(secs, 3) + " s"};
}

Outcome threshold_monotonicity() {
  int violations = 0;
  int sets = 0;
  for (const auto& [row, per] : fixture_rows())
    for (const auto& [d, rs] : per) {
      ++sets;
      if (harness::asr(rs, kTarget, 0.8) > harness::asr(rs, kTarget, 0.5)) ++violations;
    }

  Rng rng(2024);
  const char* labels[] = {"stop sign", "stop sign", "car", "person"};
  for (int i = 0; i < kRandomRecordSets; ++i) {
    std::vector<harness::TrialRecord> rs;
    const int n = 1 + static_cast<int>(rng.below(120));
    for (int t = 0; t < n; ++t) {
      harness::TrialRecord r;
      r.trial_id = "t" + std::to_string(t);
      r.condition = "magic";
      r.detector_id = "m";
      r.plan.bbox = {200, 200, 80, 80};
      for (int k = 0, m = static_cast<int>(rng.below(5)); k < m; ++k) {
        const BBox box = rng.below(3) == 0 ? BBox{0, 0, 50, 50}
                                           : BBox{200 + static_cast<int>(rng.below(20)), 200, 80, 80};
        // Snap some confidences onto the thresholds themselves.
        double conf = rng.uniform01();
        if (rng.below(10) == 0) conf = rng.below(2) ? 0.5 : 0.8;
        r.detections.push_back({labels[rng.below(4)], conf, box});
      }
      sort_by_confidence(r.detections);
      rs.push_back(std::move(r));
    }
    ++sets;
    if (harness::asr(rs, kTarget, 0.8) > harness::asr(rs, kTarget, 0.5)) ++violations;
  }
  return {violations == 0, std::to_string(sets) + " record sets, " + std::to_string(violations) + " violations"};
}

Outcome loop_termination() {
  const auto t0 = std::chrono::steady_clock::now();
  test::TempDir tmp("accept-loop");
  int accept_bad = 0, exhaust_bad = 0, naive_bad = 0;
  std::string first_problem;
  auto note = [&](int& counter, const std::string& what) {
    ++counter;
    if (first_problem.empty()) first_problem = what;
  };

  for (int i = 0; i < kLoopScenarios; ++i) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
    const auto scene = test::make_scene(96 + (i % 5) * 16, 80 + (i % 3) * 16, seed, "scene" + std::to_string(i));
    const auto config = test::quick_config(seed);
    const int scripted = 1 + i % 10;
    const fs::path root = tmp.path() / std::to_string(i);
    orchestrator::RunOptions opts;
    opts.run_id = "r";

    // (b) never passing: exhausts at the cap.
    opts.runs_root = root / "never";
    const auto never = orchestrator::run_pipeline(scene, test::stop_sign(), config, make_mock_backends(), opts);
    bool ok = never.status == orchestrator::RunStatus::exhausted && never.history.size() == 10 &&
              never.history.back().verdict.decision == Decision::give_up;
    for (std::size_t k = 0; ok && k + 1 < never.history.size(); ++k)
      ok = never.history[k].verdict.decision != Decision::give_up;
    if (!ok) note(exhaust_bad, "scenario " + std::to_string(i) + " did not exhaust at 10");

    // (a) the detector fires on the patch of the scripted iteration.
    auto backends = make_mock_backends();
    const auto patch = read_png_rgba(root / "never" / "r" / "iterations" / std::to_string(scripted) / "patch.png");
    test::mock_detector(backends).register_patch(patch, kTarget, 0.9, config.target_detector);
    opts.runs_root = root / "scripted";
    const auto scripted_run = orchestrator::run_pipeline(scene, test::stop_sign(), config, backends, opts);
    if (scripted_run.status != orchestrator::RunStatus::accepted ||
        scripted_run.history.size() != static_cast<std::size_t>(scripted)) {
      note(accept_bad, "scenario " + std::to_string(i) + " scripted at " + std::to_string(scripted) + " ended " +
                           orchestrator::to_string(scripted_run.status) + " after " +
                           std::to_string(scripted_run.history.size()));
    }

    // (c) naive generation: the same prompt bytes every iteration.
    auto naive_config = config;
    naive_config.ablation_mode = AblationMode::gagent_naive;
    opts.runs_root = root / "naive";
    const auto naive = orchestrator::run_pipeline(scene, test::stop_sign(), naive_config, make_mock_backends(), opts);
    const std::string first = read_text(root / "naive" / "r" / "iterations" / "1" / "prompt_spec.json");
    bool same = naive.history.size() == 10;
    for (const auto& rec : naive.history) {
      const auto spec_file = root / "naive" / "r" / "iterations" / std::to_string(rec.iteration) / "prompt_spec.json";
      same = same && read_text(spec_file) == first &&
             render_prompt(rec.prompt) == render_prompt(naive.history.front().prompt);
    }
    if (!same) note(naive_bad, "scenario " + std::to_string(i) + " changed its prompt");
    fs::remove_all(root);
  }
  const double secs = seconds_since(t0);
  const int violations = accept_bad + exhaust_bad + naive_bad;
  std::string detail = std::to_string(kLoopScenarios) + " scenarios; violations: accept " +
                       std::to_string(accept_bad) + ", exhaust " + std::to_string(exhaust_bad) + ", naive " +
                       std::to_string(naive_bad) + "; " + num(secs, 1) + " s";
  if (!first_problem.empty()) detail += "; first: " + first_problem;
  return {violations == 0 && secs < kLoopSeconds, detail};
}

Outcome crash_resume() {
  test::TempDir tmp("accept-resume");
  const AblationMode modes[] = {AblationMode::full, AblationMode::gagent_naive, AblationMode::gagent_naive_dagent,
                                AblationMode::gagent_naive_eagent_ae};
  int interruptions = 0, mismatches = 0;
  std::string first_problem;
  for (int i = 0; i < kResumeRuns; ++i) {
    const auto scene = test::make_scene(96, 80 + (i % 4) * 8, 300 + static_cast<std::uint64_t>(i), "s");
    auto config = test::quick_config(77 + static_cast<std::uint64_t>(i));
    config.ablation_mode = modes[i % 4];
    config.max_iterations = 3;
    const int accept_at = i % 4;  // 0: never
    const fs::path root = tmp.path() / std::to_string(i);

    std::optional<RasterRgba> patch;
    if (accept_at > 0) patch = test::dry_run_patch(scene, test::stop_sign(), config, accept_at, root / "dry");
    auto fresh = [&] {
      auto b = make_mock_backends();
      if (patch) test::mock_detector(b).register_patch(*patch, kTarget, 0.9, config.target_detector);
      return b;
    };

    orchestrator::RunOptions opts;
    opts.run_id = "r";
    opts.runs_root = root / "reference";
    const auto reference = orchestrator::run_pipeline(scene, test::stop_sign(), config, fresh(), opts);
    std::vector<orchestrator::Phase> ref_phases;
    for (const auto& e : orchestrator::read_events(root / "reference" / "r" / "events.jsonl"))
      ref_phases.push_back(e.phase);

    const std::size_t boundaries = 2 * reference.events_written;
    for (std::size_t stop = 1; stop <= boundaries; ++stop) {
      ++interruptions;
      const fs::path cut = root / ("cut" + std::to_string(stop));
      std::size_t seen = 0;
      opts.runs_root = cut;
      opts.after_phase = [&](const orchestrator::RunState&, orchestrator::Boundary) {
        if (++seen == stop) throw orchestrator::RunInterrupted();
      };
      bool interrupted = false;
      try {
        orchestrator::run_pipeline(scene, test::stop_sign(), config, fresh(), opts);
      } catch (const orchestrator::RunInterrupted&) {
        interrupted = true;
      }
      opts.after_phase = nullptr;
      const auto resumed = orchestrator::resume(cut / "r", fresh());
      std::vector<orchestrator::Phase> phases;
      for (const auto& e : orchestrator::read_events(cut / "r" / "events.jsonl")) phases.push_back(e.phase);
      if (!interrupted || !orchestrator::same_outcome(resumed, reference) || phases != ref_phases) {
        ++mismatches;
        if (first_problem.empty())
          first_problem = "run " + std::to_string(i) + " cut at boundary " + std::to_string(stop);
      }
      fs::remove_all(cut);
    }
  }
  std::string detail = std::to_string(kResumeRuns) + " runs, " + std::to_string(interruptions) +
                       " interruptions, " + std::to_string(mismatches) + " mismatches";
  if (!first_problem.empty()) detail += "; first: " + first_problem;
  return {mismatches == 0, detail};
}

// Independent rotation: exact at quarter turns, libm elsewhere.
std::pair<double, double> oracle_sin_cos(double deg) {
  const double q = deg / 90.0;
  if (q == std::floor(q)) {
    const long k = ((static_cast<long>(q) % 4) + 4) % 4;
    const double s[] = {0, 1, 0, -1};
    const double c[] = {1, 0, -1, 0};
    return {s[k], c[k]};
  }
  const double r = deg * std::numbers::pi / 180.0;
  return {std::sin(r), std::cos(r)};
}

// Pixels whose centres fall in [lo, hi): first index ceil(lo - 0.5).
BBox corner_oracle(const DeploymentPlan& plan, int scene_w, int scene_h, double aspect) {
  const double w = plan.scale * scene_w;
  const double h = w / aspect;
  const double cx = plan.anchor_x * scene_w;
  const double cy = plan.anchor_y * scene_h;
  const auto [s, c] = oracle_sin_cos(plan.rotation_deg);
  double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1}) {
      const double px = sx * w / 2, py = sy * h / 2;
      const double x = cx + px * c - py * s;
      const double y = cy + px * s + py * c;
      lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x);
      lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
    }
  const int x0 = static_cast<int>(std::ceil(lo_x - 0.5)), x1 = static_cast<int>(std::ceil(hi_x - 0.5));
  const int y0 = static_cast<int>(std::ceil(lo_y - 0.5)), y1 = static_cast<int>(std::ceil(hi_y - 0.5));
  return {x0, y0, x1 - x0, y1 - y0};
}

RasterRgba random_patch(Rng& rng, int w, int h) {
  RasterRgba p(w, h);
  for (auto& b : p.data) b = static_cast<std::uint8_t>(rng.below(256));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto roll = rng.below(4);
      if (roll == 0) p.at(x, y)[3] = 0;
      if (roll == 1) p.at(x, y)[3] = 255;
    }
  return p;
}

std::uint8_t blend(std::uint8_t src, std::uint8_t dst, std::uint8_t a) {
  const std::uint64_t num = std::uint64_t{src} * a + std::uint64_t{dst} * (255u - a);
  std::uint64_t q = num / 255, r = num % 255;
  if (2 * r > 255 || (2 * r == 255 && q % 2 == 1)) ++q;
  return static_cast<std::uint8_t>(q);
}

Outcome compositor_exactness() {
  Rng rng(5150);
  const SceneImage scene = test::make_scene(64, 64, 42, "loc");

  // Locality, every pixel of a 64x64 scene.
  long changed_outside = 0;
  int composited = 0;
  while (composited < kLocalityPlans) {
    DeploymentPlan plan;
    plan.scale = rng.uniform(0.05, 0.6);
    plan.anchor_x = rng.uniform01();
    plan.anchor_y = rng.uniform01();
    plan.rotation_deg = rng.below(4) == 0 ? 90.0 * static_cast<double>(rng.below(4)) : rng.uniform(-180, 180);
    const int side = 4 + static_cast<int>(rng.below(40));
    plan.bbox = compositor::plan_to_bbox(plan, 64, 64, 1.0);
    if (!plan.bbox.inside(64, 64) || plan.bbox.area() == 0) continue;
    ++composited;
    const Patch patch{random_patch(rng, side, side), {}, 0, 0};
    const auto resample = rng.below(2) ? compositor::Resample::nearest : compositor::Resample::bilinear;
    const auto out = compositor::composite(scene, patch, plan, resample);
    const double w = plan.scale * 64, cx = plan.anchor_x * 64, cy = plan.anchor_y * 64;
    const auto [s, c] = oracle_sin_cos(plan.rotation_deg);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = dx * c + dy * s, v = -dx * s + dy * c;
        const bool outside_rect = std::abs(u) > w / 2 + 1e-9 || std::abs(v) > w / 2 + 1e-9;
        const bool outside_box = !(x >= plan.bbox.x && x < plan.bbox.right() && y >= plan.bbox.y &&
                                   y < plan.bbox.bottom());
        if ((outside_rect || outside_box) &&
            !std::equal(out.pixels.at(x, y).begin(), out.pixels.at(x, y).end(), scene.pixels.at(x, y).begin()))
          ++changed_outside;
      }
  }

  // plan_to_bbox against corner enumeration.
  long deviation = 0;
  for (int i = 0; i < kBboxPlans; ++i) {
    DeploymentPlan plan;
    const int sw = 32 + static_cast<int>(rng.below(1969));
    const int sh = 32 + static_cast<int>(rng.below(1969));
    const double aspect = rng.uniform(0.5, 2.0);
    plan.scale = rng.uniform(0.01, 0.8);
    plan.anchor_x = rng.uniform01();
    plan.anchor_y = rng.uniform01();
    plan.rotation_deg = rng.below(5) == 0 ? 90.0 * (static_cast<double>(rng.below(8)) - 4) : rng.uniform(-180, 180);
    const BBox got = compositor::plan_to_bbox(plan, sw, sh, aspect);
    const BBox want = corner_oracle(plan, sw, sh, aspect);
    deviation = std::max<long>({deviation, std::abs(got.x - want.x), std::abs(got.y - want.y),
                                std::abs(got.right() - want.right()), std::abs(got.bottom() - want.bottom())});
  }

  // Nearest paste against a direct per-pixel oracle (axis aligned, integer footprint).
  int paste_mismatch = 0;
  for (int i = 0; i < kPastePlans; ++i) {
    const int pw = 1 << (2 + rng.below(4));  // 4..32
    const int w = 2 + static_cast<int>(rng.below(47));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(64 - w + 1)));
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(64 - w + 1)));
    DeploymentPlan plan;
    plan.scale = w / 64.0;
    plan.anchor_x = (left + w / 2.0) / 64.0;
    plan.anchor_y = (top + w / 2.0) / 64.0;
    plan.bbox = {left, top, w, w};
    const Patch patch{random_patch(rng, pw, pw), {}, 0, 0};
    const auto out = compositor::composite(scene, patch, plan, compositor::Resample::nearest);
    RasterRgb want = scene.pixels;
    for (int y = top; y < top + w; ++y)
      for (int x = left; x < left + w; ++x) {
        const int sx = (2 * (x - left) + 1) * pw / (2 * w);
        const int sy = (2 * (y - top) + 1) * pw / (2 * w);
        const auto p = patch.pixels.at(sx, sy);
        auto d = want.at(x, y);
        for (int k = 0; k < 3; ++k) d[k] = blend(p[k], d[k], p[3]);
      }
    if (out.pixels.data != want.data) ++paste_mismatch;
  }

  return {changed_outside == 0 && deviation == 0 && paste_mismatch == 0,
          std::to_string(composited) + " composites, " + std::to_string(changed_outside) +
              " pixels changed outside the footprint; bbox max deviation " + std::to_string(deviation) + " px over " +
              std::to_string(kBboxPlans) + " plans; " + std::to_string(paste_mismatch) + "/" +
              std::to_string(kPastePlans) + " nearest pastes differ"};
}

Outcome gate_soundness() {
  long cases = 0, mismatches = 0;
  const int max_iterations = 10;
  for (int ks = 0; ks <= kGateSteps; ++ks)
    for (int kn = 0; kn <= kGateSteps; ++kn)
      for (int kt = 0; kt <= kGateSteps; ++kt)
        for (int kd = 0; kd <= kGateSteps; ++kd) {
          ++cases;
          const double step = 1.0 / kGateSteps;
          const bool accept = ks >= kt && kn >= kd;
          for (int iteration : {1, max_iterations}) {
            const auto v = eagent::decide(ks * step, kn * step, kt * step, kd * step, iteration, max_iterations);
            Decision want;
            if (accept) want = Decision::accept;
            else if (iteration >= max_iterations) want = Decision::give_up;
            else if (ks < kt && kn < kd) want = Decision::refine_both;
            else if (ks < kt) want = Decision::refine_prompt;
            else want = Decision::refine_plan;
            if (v.decision != want) {
              ++mismatches;
              break;
            }
          }
        }
  return {mismatches == 0 && cases == 194481,
          std::to_string(cases) + " grid cases, " + std::to_string(mismatches) + " mismatches"};
}

std::string plan_reply(const std::string& method, int region, double ax, double ay, double scale) {
  return test::fenced({{"method", method},
                       {"region_index", region},
                       {"anchor", {ax, ay}},
                       {"scale", scale},
                       {"rotation_deg", 0},
                       {"position", "center"},
                       {"rationale", "scripted"}});
}

Outcome plan_validity() {
  Rng rng(8080);
  MockSegmenter segmenter;
  const auto table = dagent::SurfaceTable::load(test::assets());
  const Patch patch{test::solid_rgba(64, 64, 200, 30, 30), {}, 0, 0};
  int invalid = 0, wrong_path = 0;
  const char* variants[] = {"valid", "one-retry", "fallback"};
  for (int i = 0; i < kProposeCalls; ++i) {
    const int w = 96 + static_cast<int>(rng.below(305));
    const int h = static_cast<int>(w * rng.uniform(0.8, 1.4));
    const auto scene = test::make_scene(w, h, static_cast<std::uint64_t>(i), "p" + std::to_string(i));
    const auto regions = dagent::catalog_regions(scene, segmenter, table);
    const std::string good =
        plan_reply("paint", 5, rng.uniform(0.45, 0.55), rng.uniform(0.45, 0.55), rng.uniform(0.05, 0.12));
    const std::string bad = rng.below(2) ? plan_reply("hang", 5, 0.5, 0.5, 0.1) : plan_reply("paint", 99, 0.5, 0.5, 0.1);

    MockChat chat;
    const int variant = i % 3;
    if (variant == 0) {
      chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message, good});
    } else if (variant == 1) {
      chat.add_rule({"REASK", ChatRuleScope::last_message, good});
      chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message, bad});
    } else {
      chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message, bad});
    }
    dagent::ProposeContext ctx;
    ctx.target_class = kTarget;
    const auto plan = dagent::propose_plan(scene, regions, patch, ctx, chat, test::settings());
    if (!dagent::validate_plan(plan, w, h, 1.0, regions, ctx.limits).empty()) ++invalid;
    const std::size_t expected_calls = static_cast<std::size_t>(variant) + 1;
    const bool path_ok = chat.call_count() == expected_calls &&
                         (variant < 2 ? plan.region_index == 5
                                      : plan == dagent::best_valid_fallback(w, h, 1.0, regions, ctx.limits));
    if (!path_ok) {
      ++wrong_path;
      if (wrong_path == 1) spdlog::warn("propose_plan variant {} took an unexpected path", variants[variant]);
    }
  }

  const auto big = test::make_scene(900, 900, 1, "cover");
  const auto regions = dagent::catalog_regions(big, segmenter, table);
  std::map<int, int> hits;
  Rng draws(4242);
  for (int i = 0; i < kRandomDraws; ++i) ++hits[dagent::random_plan(900, 900, 1.0, regions, draws).region_index];
  const double expected = static_cast<double>(kRandomDraws) / static_cast<double>(regions.size());
  double chi2 = 0.0;
  for (const auto& r : regions) {
    const double d = hits[r.index] - expected;
    chi2 += d * d / expected;
  }
  const bool covered = hits.size() == regions.size();
  return {invalid == 0 && wrong_path == 0 && covered && chi2 < kChiSquareCritical,
          std::to_string(kProposeCalls) + " proposals, " + std::to_string(invalid) + " invalid, " +
              std::to_string(wrong_path) + " off the scripted path; random_plan hit " + std::to_string(hits.size()) +
              "/" + std::to_string(regions.size()) + " regions, chi-square " + num(chi2)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 table arithmetic", table_arithmetic},     {"C2 threshold monotonicity", threshold_monotonicity},
      {"C3 loop termination", loop_termination},     {"C4 crash-resume equivalence", crash_resume},
      {"C5 compositor exactness", compositor_exactness}, {"C6 gate soundness", gate_soundness},
      {"C7 plan validity", plan_validity},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
