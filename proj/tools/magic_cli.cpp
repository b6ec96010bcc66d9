// magic: command-line front end of the pipeline, the evaluation harness and
// the sidecar conformance check.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "magic/compositor.hpp"
#include "magic/gagent.hpp"
#include "magic/harness.hpp"
#include "magic/orchestrator.hpp"
#include "magic/remote_backends.hpp"

namespace fs = std::filesystem;
using namespace magic;

namespace {

constexpr int kBadUsage = 64;
constexpr int kFailed = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return json::parse(read_text(path)).get<RunConfig>();
  } catch (const std::exception& e) {
    throw UsageError("cannot read config " + path + ": " + e.what());
  }
}

void require_valid(const RunConfig& config) {
  if (auto v = validate(config); !v.empty()) throw UsageError("invalid config: " + v.front().field + ": " + v.front().message);
}

void print_outcome(const orchestrator::RunState& state, const fs::path& dir) {
  std::cout << "run " << state.run_id << ": " << orchestrator::to_string(state.status) << " after "
            << state.history.size() << " iteration(s)\n";
  if (!state.error.empty()) std::cout << "error: " << state.error << "\n";
  std::cout << "run directory: " << dir.string() << "\n";
}

// --- run / resume ----------------------------------------------------------

struct RunArgs {
  std::string scene;
  std::string target;
  std::string config;
  std::string ablation;
  std::optional<std::uint64_t> seed;
  std::string runs_root = "runs";
  std::string run_id;
};

int cmd_run(const RunArgs& a) {
  RunConfig config = load_config(a.config);
  if (!a.ablation.empty()) {
    auto mode = parse_ablation_mode(a.ablation);
    if (!mode) throw UsageError("unknown ablation mode '" + a.ablation + "'");
    config.ablation_mode = *mode;
  }
  if (a.seed) config.rng_seed = *a.seed;
  require_valid(config);
  const AttackObjective objective{a.target, ""};
  if (auto v = validate(objective); !v.empty()) throw UsageError(v.front().message);

  const SceneImage scene = load_scene(a.scene);
  orchestrator::RunOptions options;
  options.runs_root = a.runs_root;
  options.run_id = a.run_id;
  const auto state = orchestrator::run_pipeline(scene, objective, config, make_backends(config.backends), options);
  print_outcome(state, fs::path(a.runs_root) / state.run_id);
  return orchestrator::exit_code(state.status);
}

int cmd_resume(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw UsageError("not a run directory: " + run_dir);
  auto [config, objective] = orchestrator::load_run_config(run_dir);
  const auto state = orchestrator::resume(run_dir, make_backends(config.backends));
  print_outcome(state, run_dir);
  return orchestrator::exit_code(state.status);
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string scene;
  std::string conditions = "ndda_rand,ndda_dagent,magic";
  std::string thresholds = "0.5,0.8";
  std::string fixtures;
  std::string target = "stop sign";
  std::string detectors;
  std::string config;
  std::string removal = "text";
  std::string out = "eval";
  bool no_location_gate = false;
};

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  for (const auto& t : split_list(text)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || !(v >= 0.0 && v <= 1.0)) throw UsageError("threshold must be a number in [0, 1]: " + t);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("at least one threshold is required");
  return out;
}

std::set<Feature> parse_removal(const std::string& text) {
  if (text == "all") return {std::begin(kAllFeatures), std::end(kAllFeatures)};
  std::set<Feature> out;
  for (const auto& f : split_list(text)) {
    auto feature = parse_feature(f);
    if (!feature) throw UsageError("unknown feature '" + f + "'");
    out.insert(*feature);
  }
  return out;
}

// The patch a finished run would deploy: the accepted one, else its best effort.
Patch final_patch(const fs::path& run_dir, const orchestrator::RunState& state) {
  if (state.history.empty()) throw std::runtime_error("run " + state.run_id + " produced no patch: " + state.error);
  const orchestrator::IterationRecord* pick = &state.history.back();
  if (state.best_effort) {
    for (const auto& r : state.history)
      if (r.iteration == *state.best_effort) pick = &r;
  }
  return Patch{read_png_rgba(run_dir / pick->patch_ref), pick->prompt, pick->patch_seed, pick->iteration - 1};
}

std::vector<Patch> live_patches(const std::string& condition, const SceneImage& scene, const AttackObjective& objective,
                                const RunConfig& config, const std::set<Feature>& removal, const Backends& backends,
                                const fs::path& out) {
  std::vector<Patch> patches;
  if (condition == "ndda_rand" || condition == "ndda_dagent") {
    const AssetStore assets(config.asset_dir);
    const auto templates = gagent::FeatureTemplates::load(assets);
    for (int i = 0; i < config.eval_trials; ++i) {
      const auto spec = gagent::initial_prompt(objective, removal, derive_seed(config.rng_seed, "prompt/" + std::to_string(i)),
                                               templates);
      patches.push_back(gagent::generate_patch(spec, *backends.t2i, derive_seed(config.rng_seed, "patch/" + std::to_string(i)),
                                               0, config.patch_size_px));
    }
    return patches;
  }
  RunConfig trial = config;
  trial.ablation_mode = condition == "magic" ? AblationMode::full : *parse_ablation_mode(condition.substr(9));
  const fs::path runs = out / "runs" / (condition == "magic" ? condition : "ablation_" + condition.substr(9));
  for (int i = 0; i < config.eval_trials; ++i) {
    trial.rng_seed = derive_seed(config.rng_seed, static_cast<std::uint64_t>(i));
    orchestrator::RunOptions options;
    options.runs_root = runs;
    options.run_id = "trial_" + std::to_string(i + 1);
    const auto state = orchestrator::run_pipeline(scene, objective, trial, backends, options);
    patches.push_back(final_patch(runs / options.run_id, state));
  }
  return patches;
}

int cmd_eval(const EvalArgs& a) {
  const auto thresholds = parse_thresholds(a.thresholds);
  RunConfig config = load_config(a.config);
  require_valid(config);
  std::vector<std::string> detectors = a.detectors.empty() ? config.eval_detectors : split_list(a.detectors);
  const auto conditions = split_list(a.conditions);
  if (conditions.empty()) throw UsageError("at least one condition is required");
  for (const auto& c : conditions)
    if (!harness::valid_condition(c)) throw UsageError("unknown condition '" + c + "'");

  std::vector<harness::TrialRecord> records;
  const fs::path out = a.out;
  fs::create_directories(out);
  if (!a.fixtures.empty()) {
    const auto loaded = harness::load_fixture_dir(a.fixtures);
    for (const auto& c : conditions) {
      auto it = loaded.find(c);
      if (it == loaded.end()) throw UsageError("no fixtures for condition '" + c + "' in " + a.fixtures);
      for (const auto& [_, recs] : it->second) records.insert(records.end(), recs.begin(), recs.end());
    }
  } else {
    if (a.scene.empty()) throw UsageError("--scene is required without --fixtures");
    const SceneImage scene = load_scene(a.scene);
    const AttackObjective objective{a.target, ""};
    if (auto v = validate(objective); !v.empty()) throw UsageError(v.front().message);
    const auto removal = parse_removal(a.removal);
    const Backends backends = make_backends(config.backends);
    const AssetStore assets(config.asset_dir);
    AgentSettings settings;
    settings.assets = &assets;
    settings.temperature = config.backends.mode == "mock" ? 0.0 : config.agent_temperature;
    settings.seed = config.rng_seed;
    for (const auto& c : conditions) {
      const auto patches = live_patches(c, scene, objective, config, removal, backends, out);
      for (const auto& d : detectors) {
        harness::ConditionSetup setup{c, d, objective, config.rng_seed, config.scale_min, config.scale_max,
                                      out / "patches" / c};
        std::vector<harness::TrialRecord> partial;
        const std::string file = (c.rfind("ablation:", 0) == 0 ? "ablation_" + c.substr(9) : c) + "_" + d;
        try {
          harness::run_condition(scene, patches, setup, backends, settings, &partial);
        } catch (const BackendError&) {
          harness::write_records(out / (file + ".partial.jsonl"), partial);
          throw;
        }
        if (c == "ndda_rand" || c == "ndda_dagent")
          for (auto& r : partial) r.prompt_group = a.removal;
        harness::write_records(out / (file + ".jsonl"), partial);
        records.insert(records.end(), partial.begin(), partial.end());
      }
    }
  }

  const auto sets = harness::group_by_row(records);
  json report = {{"target_class", a.target},
                 {"location_gate", !a.no_location_gate},
                 {"source", a.fixtures.empty() ? "live" : a.fixtures},
                 {"tables", json::array()}};
  std::string md = "# ASR report\n\nTarget class: " + a.target + (a.no_location_gate ? " (location gate off)" : "") + "\n";
  for (double t : thresholds) {
    harness::SuccessRule rule{t, !a.no_location_gate, config.location_iou};
    const auto table = harness::table_at(sets, a.target, detectors, rule);
    report["tables"].push_back(table.to_json());
    md += "\n" + table.to_markdown();
  }
  write_text_atomic(out / "report.json", report.dump(2));
  write_text_atomic(out / "report.md", md);
  std::cout << md << "\nwrote " << (out / "report.json").string() << "\n";
  return 0;
}

// --- export-print ----------------------------------------------------------

struct ExportArgs {
  std::string run_dir;
  int dpi = 300;
  double width_mm = 0.0;
  std::optional<int> iteration;
  std::string out;
};

int cmd_export(const ExportArgs& a) {
  const fs::path dir = a.run_dir;
  const auto state = orchestrator::load_state(dir);
  if (state.history.empty()) throw UsageError("run " + state.run_id + " has no examined iteration");
  Patch patch = final_patch(dir, state);
  if (a.iteration) {
    auto it = std::find_if(state.history.begin(), state.history.end(),
                           [&](const auto& r) { return r.iteration == *a.iteration; });
    if (it == state.history.end()) throw UsageError("run has no iteration " + std::to_string(*a.iteration));
    patch = Patch{read_png_rgba(dir / it->patch_ref), it->prompt, it->patch_seed, it->iteration - 1};
  }
  const fs::path out = a.out.empty() ? dir / "print" : fs::path(a.out);
  const std::string name = state.run_id + "_iter" + std::to_string(patch.generation + 1);
  try {
    const auto files = compositor::export_print(patch, a.dpi, a.width_mm, out, name);
    std::cout << files.png.string() << "\n" << files.pdf.string() << "\n"
              << files.width_px << "x" << files.height_px << " px" << (files.resampled ? " (resampled)" : "") << "\n";
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return 0;
}

// --- sidecar-check ---------------------------------------------------------

int cmd_sidecar_check(const std::string& endpoint, double timeout_s, bool as_json) {
  const auto report = sidecar_conformance(endpoint, std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000)));
  if (as_json) std::cout << report.to_json().dump(2) << "\n";
  else std::cout << report.to_text();
  return report.passed() ? 0 : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magic: agent-driven adversarial patch generation, deployment and evaluation"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "run the generate-deploy-examine loop on one scene");
  run_cmd->add_option("--scene", run.scene, "scene PNG")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--target", run.target, "target class, e.g. \"stop sign\"")->required();
  run_cmd->add_option("--config", run.config, "run config JSON")->check(CLI::ExistingFile);
  run_cmd->add_option("--ablation", run.ablation, "full, gagent_naive, gagent_naive_dagent or gagent_naive_eagent_ae");
  run_cmd->add_option("--seed", run.seed, "RNG seed");
  run_cmd->add_option("--runs-root", run.runs_root, "parent of run directories")->capture_default_str();
  run_cmd->add_option("--run-id", run.run_id, "run directory name");

  std::string resume_dir;
  auto* resume_cmd = app.add_subcommand("resume", "continue an interrupted run");
  resume_cmd->add_option("run_dir", resume_dir, "run directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "compute ASR tables from fixtures or live trials");
  eval_cmd->add_option("--scene", eval.scene, "scene PNG (live trials)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--conditions", eval.conditions, "comma-separated conditions")->capture_default_str();
  eval_cmd->add_option("--thresholds", eval.thresholds, "comma-separated confidence thresholds")->capture_default_str();
  eval_cmd->add_option("--fixtures", eval.fixtures, "directory of recorded trials")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--target", eval.target, "target class")->capture_default_str();
  eval_cmd->add_option("--detectors", eval.detectors, "comma-separated detector ids (default: config)");
  eval_cmd->add_option("--config", eval.config, "run config JSON")->check(CLI::ExistingFile);
  eval_cmd->add_option("--removal", eval.removal, "removed features of live baseline prompts, or all")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "output directory")->capture_default_str();
  eval_cmd->add_flag("--no-location-gate", eval.no_location_gate, "count detections anywhere in the scene");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export-print", "write a print-ready PNG and PDF of a run's patch");
  export_cmd->add_option("run_dir", exp.run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  export_cmd->add_option("--dpi", exp.dpi, "print resolution")->required();
  export_cmd->add_option("--width-mm", exp.width_mm, "physical width in millimetres")->required();
  export_cmd->add_option("--iteration", exp.iteration, "iteration to export (default: accepted or best effort)");
  export_cmd->add_option("--out", exp.out, "output directory (default: <run_dir>/print)");

  std::string endpoint;
  double timeout_s = 60.0;
  bool as_json = false;
  auto* check_cmd = app.add_subcommand("sidecar-check", "validate a model sidecar against the wire protocol");
  check_cmd->add_option("endpoint", endpoint, "base URL, e.g. http://localhost:8500")->required();
  check_cmd->add_option("--timeout", timeout_s, "per-request timeout in seconds")->capture_default_str();
  check_cmd->add_flag("--json", as_json, "print the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kBadUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run_cmd) return cmd_run(run);
    if (*resume_cmd) return cmd_resume(resume_dir);
    if (*eval_cmd) return cmd_eval(eval);
    if (*export_cmd) return cmd_export(exp);
    if (*check_cmd) return cmd_sidecar_check(endpoint, timeout_s, as_json);
  } catch (const UsageError& e) {
    std::cerr << "magic: " << e.what() << "\n";
    return kBadUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "magic: " << e.what() << "\n";
    return kBadUsage;
  } catch (const std::exception& e) {
    std::cerr << "magic: " << e.what() << "\n";
    return kFailed;
  }
  return kBadUsage;
}
