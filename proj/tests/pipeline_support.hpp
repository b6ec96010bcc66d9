#pragma once

#include <memory>

#include "magic/mock_backends.hpp"
#include "magic/orchestrator.hpp"
#include "magic/raster.hpp"
#include "support.hpp"

namespace magic::test {

/// Small patches and fast PNG writes for pipeline tests.
inline RunConfig quick_config(std::uint64_t seed = 0) {
  RunConfig c;
  c.patch_size_px = 64;
  c.png_compression = 1;
  c.rng_seed = seed;
  return c;
}

inline AttackObjective stop_sign() { return {"stop sign", ""}; }

inline MockDetector& mock_detector(const Backends& b) { return static_cast<MockDetector&>(*b.detector); }
inline MockChat& mock_chat(const Backends& b) { return static_cast<MockChat&>(*b.llm); }

/// Patch that a run with fresh mock backends generates at `iteration`.
/// The dry run never succeeds, so it reaches every iteration.
inline RasterRgba dry_run_patch(const SceneImage& scene, const AttackObjective& objective, const RunConfig& config,
                                int iteration, const std::filesystem::path& scratch) {
  orchestrator::RunOptions opts;
  opts.runs_root = scratch;
  opts.run_id = "dry";
  std::filesystem::remove_all(scratch / "dry");
  orchestrator::run_pipeline(scene, objective, config, make_mock_backends(), opts);
  return read_png_rgba(scratch / "dry" / "iterations" / std::to_string(iteration) / "patch.png");
}

/// Mock backends whose detector sees the target once the patch of `iteration`
/// appears in the composite.
inline Backends backends_accepting_at(const SceneImage& scene, const AttackObjective& objective,
                                      const RunConfig& config, int iteration, const std::filesystem::path& scratch,
                                      double confidence = 0.9) {
  Backends b = make_mock_backends();
  mock_detector(b).register_patch(dry_run_patch(scene, objective, config, iteration, scratch), objective.target_class,
                                  confidence, config.target_detector);
  return b;
}

}  // namespace magic::test
