#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "magic/backends.hpp"
#include "magic/domain.hpp"
#include "magic/gagent.hpp"

namespace magic::orchestrator {

enum class Phase { describe, generate, deploy, composite, examine, refine, done };
enum class RunStatus { running, accepted, exhausted, failed };

NLOHMANN_JSON_SERIALIZE_ENUM(Phase, {{Phase::describe, "describe"},
                                     {Phase::generate, "generate"},
                                     {Phase::deploy, "deploy"},
                                     {Phase::composite, "composite"},
                                     {Phase::examine, "examine"},
                                     {Phase::refine, "refine"},
                                     {Phase::done, "done"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RunStatus, {{RunStatus::running, "running"},
                                         {RunStatus::accepted, "accepted"},
                                         {RunStatus::exhausted, "exhausted"},
                                         {RunStatus::failed, "failed"}})

std::string to_string(Phase p);
std::string to_string(RunStatus s);

struct IterationRecord {
  int iteration = 0;  // 1-based
  PromptSpec prompt;
  std::string patch_ref;  // relative to the run directory
  std::uint64_t patch_seed = 0;
  DeploymentPlan plan;
  std::vector<Detection> detections;
  IterationVerdict verdict;
  std::string naturality_rationale;

  bool operator==(const IterationRecord&) const = default;
};

struct RunState {
  std::string run_id;
  std::string scene_id;
  int iteration = 1;
  Phase phase = Phase::describe;  // next phase to execute
  RunStatus status = RunStatus::running;
  bool finalized = false;
  std::vector<IterationRecord> history;  // examined iterations

  // Carried between phases.
  std::optional<gagent::SceneDescription> scene_description;
  std::vector<Region> regions;
  PromptSpec prompt;
  std::uint64_t patch_seed = 0;
  std::optional<DeploymentPlan> plan;
  bool replan = false;
  std::string plan_feedback;
  std::optional<int> best_effort;  // iteration number, set on exhaustion
  std::string error;

  std::size_t events_written = 0;
  json last_event;

  bool operator==(const RunState&) const = default;
};

void to_json(json& j, const IterationRecord& v);
void from_json(const json& j, IterationRecord& v);
void to_json(json& j, const RunState& v);
void from_json(const json& j, RunState& v);

/// Field-by-field equality ignoring event timestamps.
bool same_outcome(const RunState& a, const RunState& b);

struct Event {
  std::string ts;
  std::string run_id;
  int iteration = 0;
  Phase phase = Phase::describe;
  std::string summary;
};

void to_json(json& j, const Event& v);
void from_json(const json& j, Event& v);

/// Parses events.jsonl; throws with the line number on malformed input.
std::vector<Event> read_events(const std::filesystem::path& path);

/// Where a hook fires: after state.json is written, or after the event line.
enum class Boundary { state_saved, event_written };

/// Thrown by hooks to simulate a crash.
struct RunInterrupted : std::runtime_error {
  RunInterrupted() : std::runtime_error("run interrupted") {}
};

struct RunOptions {
  std::filesystem::path runs_root = "runs";
  std::string run_id;  // empty: derived from scene, target and seed
  std::function<void(const RunState&, Boundary)> after_phase;
};

/// Runs the loop to a terminal state, persisting every phase under
/// <runs_root>/<run_id>. Backend failures end the run with status failed.
RunState run_pipeline(const SceneImage& scene, const AttackObjective& objective, const RunConfig& config,
                      const Backends& backends, const RunOptions& options = {});

/// Continues a persisted run from its last completed phase.
RunState resume(const std::filesystem::path& run_dir, const Backends& backends,
                 const std::function<void(const RunState&, Boundary)>& after_phase = {});

/// Reads config.json of a run directory.
std::pair<RunConfig, AttackObjective> load_run_config(const std::filesystem::path& run_dir);

RunState load_state(const std::filesystem::path& run_dir);

int exit_code(RunStatus status);

}  // namespace magic::orchestrator
