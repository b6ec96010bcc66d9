#include "magic/orchestrator.hpp"

#include <cstdio>
#include <fstream>
#include <future>

#include <spdlog/spdlog.h>

#include "magic/agent_io.hpp"
#include "magic/compositor.hpp"
#include "magic/dagent.hpp"
#include "magic/eagent.hpp"

namespace magic::orchestrator {

namespace fs = std::filesystem;

std::string to_string(Phase p) { return json(p).get<std::string>(); }
std::string to_string(RunStatus s) { return json(s).get<std::string>(); }

void to_json(json& j, const IterationRecord& v) {
  j = json{{"iteration", v.iteration},
           {"prompt", v.prompt},
           {"patch_ref", v.patch_ref},
           {"patch_seed", v.patch_seed},
           {"plan", v.plan},
           {"detections", v.detections},
           {"verdict", v.verdict},
           {"naturality_rationale", v.naturality_rationale}};
}

void from_json(const json& j, IterationRecord& v) {
  j.at("iteration").get_to(v.iteration);
  j.at("prompt").get_to(v.prompt);
  j.at("patch_ref").get_to(v.patch_ref);
  j.at("patch_seed").get_to(v.patch_seed);
  j.at("plan").get_to(v.plan);
  j.at("detections").get_to(v.detections);
  j.at("verdict").get_to(v.verdict);
  v.naturality_rationale = j.value("naturality_rationale", std::string{});
}

void to_json(json& j, const RunState& v) {
  j = json{{"run_id", v.run_id},
           {"scene_id", v.scene_id},
           {"iteration", v.iteration},
           {"phase", v.phase},
           {"status", v.status},
           {"finalized", v.finalized},
           {"history", v.history},
           {"scene_description", v.scene_description ? json(*v.scene_description) : json(nullptr)},
           {"regions", v.regions},
           {"prompt", v.prompt},
           {"patch_seed", v.patch_seed},
           {"plan", v.plan ? json(*v.plan) : json(nullptr)},
           {"replan", v.replan},
           {"plan_feedback", v.plan_feedback},
           {"best_effort", v.best_effort ? json(*v.best_effort) : json(nullptr)},
           {"error", v.error},
           {"events_written", v.events_written},
           {"last_event", v.last_event}};
}

void from_json(const json& j, RunState& v) {
  j.at("run_id").get_to(v.run_id);
  j.at("scene_id").get_to(v.scene_id);
  j.at("iteration").get_to(v.iteration);
  j.at("phase").get_to(v.phase);
  j.at("status").get_to(v.status);
  j.at("finalized").get_to(v.finalized);
  j.at("history").get_to(v.history);
  v.scene_description.reset();
  if (!j.at("scene_description").is_null()) v.scene_description = j["scene_description"].get<gagent::SceneDescription>();
  j.at("regions").get_to(v.regions);
  j.at("prompt").get_to(v.prompt);
  j.at("patch_seed").get_to(v.patch_seed);
  v.plan.reset();
  if (!j.at("plan").is_null()) v.plan = j["plan"].get<DeploymentPlan>();
  j.at("replan").get_to(v.replan);
  j.at("plan_feedback").get_to(v.plan_feedback);
  v.best_effort.reset();
  if (!j.at("best_effort").is_null()) v.best_effort = j["best_effort"].get<int>();
  j.at("error").get_to(v.error);
  j.at("events_written").get_to(v.events_written);
  v.last_event = j.at("last_event");
}

bool same_outcome(const RunState& a, const RunState& b) {
  RunState x = a, y = b;
  if (x.last_event.is_object()) x.last_event.erase("ts");
  if (y.last_event.is_object()) y.last_event.erase("ts");
  return x == y;
}

void to_json(json& j, const Event& v) {
  j = json{{"ts", v.ts}, {"run_id", v.run_id}, {"iteration", v.iteration}, {"phase", v.phase}, {"summary", v.summary}};
}

void from_json(const json& j, Event& v) {
  j.at("ts").get_to(v.ts);
  j.at("run_id").get_to(v.run_id);
  j.at("iteration").get_to(v.iteration);
  v.phase = *parse_enum<Phase>(j.at("phase").get<std::string>());
  j.at("summary").get_to(v.summary);
}

std::vector<Event> read_events(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log: " + path.string());
  std::vector<Event> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!parse_enum<Phase>(j.at("phase").get<std::string>())) throw std::runtime_error("unknown phase");
      out.push_back(j.get<Event>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

int exit_code(RunStatus status) {
  switch (status) {
    case RunStatus::accepted: return 0;
    case RunStatus::exhausted: return 2;
    default: return 3;
  }
}

// ---------------------------------------------------------------------------

namespace {

struct ModeTraits {
  bool describe;              // LLM scene description
  gagent::RefineMode refine;  // prompt refinement
  bool dagent_plans;          // false: random placement
  bool naturality;            // false: naturality always passes
  bool directives;            // EAgent suggestions
};

ModeTraits traits(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return {true, gagent::RefineMode::full, true, true, true};
    case AblationMode::gagent_naive: return {false, gagent::RefineMode::frozen, false, false, false};
    case AblationMode::gagent_naive_dagent: return {false, gagent::RefineMode::frozen, true, false, false};
    case AblationMode::gagent_naive_eagent_ae:
      return {false, gagent::RefineMode::directives_only, false, false, true};
  }
  throw std::logic_error("unhandled ablation mode");
}

std::string iteration_dir(int k) { return "iterations/" + std::to_string(k); }

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string bbox_text(const BBox& b) { return json(b).dump(); }

std::string detection_summary(const std::string& target, const IterationRecord& rec) {
  std::string s = "previous round: " + target + " score " + fixed(rec.verdict.delta_s, 4);
  int shown = 0;
  for (const auto& d : rec.detections) {
    if (shown++ == 3) break;
    s += "; " + d.label + " " + fixed(d.confidence, 2) + " at " + bbox_text(d.bbox);
  }
  return s;
}

class Engine {
 public:
  Engine(fs::path dir, SceneImage scene, AttackObjective objective, RunConfig config, Backends backends,
         std::function<void(const RunState&, Boundary)> hook)
      : dir_(std::move(dir)),
        scene_(std::move(scene)),
        objective_(std::move(objective)),
        config_(std::move(config)),
        backends_(std::move(backends)),
        hook_(std::move(hook)),
        assets_(config_.asset_dir),
        mode_(traits(config_.ablation_mode)) {
    settings_.assets = &assets_;
    settings_.temperature = config_.backends.mode == "mock" ? 0.0 : config_.agent_temperature;
    settings_.seed = config_.rng_seed;
    // Mock backends never decode attachments, so skip compressing them.
    settings_.png_compression = config_.backends.mode == "mock" ? 0 : 1;
  }

  RunState run(RunState state) {
    state_ = std::move(state);
    while (!state_.finalized) step();
    return state_;
  }

 private:
  void step() {
    const Phase phase = state_.phase;
    const int iteration = state_.iteration;
    std::string summary;
    try {
      summary = execute(phase);
    } catch (const RunInterrupted&) {
      throw;
    } catch (const std::exception& e) {
      if (phase == Phase::done) throw;
      spdlog::error("run {} failed in {}: {}", state_.run_id, to_string(phase), e.what());
      state_.status = RunStatus::failed;
      state_.error = to_string(phase) + ": " + e.what();
      state_.phase = Phase::done;
      summary = "failed: " + state_.error;
    }
    Event ev{utc_timestamp(), state_.run_id, iteration, phase, summary};
    state_.last_event = ev;
    ++state_.events_written;
    write_text_atomic(dir_ / "state.json", json(state_).dump(2));
    if (hook_) hook_(state_, Boundary::state_saved);
    append_line(dir_ / "events.jsonl", json(ev).dump());
    if (hook_) hook_(state_, Boundary::event_written);
  }

  std::string execute(Phase phase) {
    switch (phase) {
      case Phase::describe: return describe();
      case Phase::generate: return generate();
      case Phase::deploy: return deploy();
      case Phase::composite: return do_composite();
      case Phase::examine: return examine();
      case Phase::refine: return refine();
      case Phase::done: return finish();
    }
    throw std::logic_error("unhandled phase");
  }

  std::string describe() {
    const auto templates = gagent::FeatureTemplates::load(assets_);
    state_.prompt = gagent::initial_prompt(objective_, config_.initial_removal, config_.rng_seed, templates);
    state_.regions = dagent::catalog_regions(scene_, *backends_.segmenter, dagent::SurfaceTable::load(assets_));
    std::string summary = std::to_string(state_.regions.size()) + " regions";
    if (mode_.describe) {
      state_.scene_description =
          gagent::describe_scene(scene_, objective_.target_class, *backends_.llm, settings_);
      summary = "scene described; " + summary;
    }
    state_.phase = Phase::generate;
    return summary;
  }

  std::string generate() {
    const int k = state_.iteration;
    state_.patch_seed = derive_seed(config_.rng_seed, static_cast<std::uint64_t>(k));
    patch_ = gagent::generate_patch(state_.prompt, *backends_.t2i, state_.patch_seed, k - 1, config_.patch_size_px);
    const fs::path d = dir_ / iteration_dir(k);
    fs::create_directories(d);
    write_text_atomic(d / "prompt.txt", render_prompt(state_.prompt) + "\n");
    write_text_atomic(d / "prompt_spec.json", json(state_.prompt).dump(2));
    write_png(d / "patch.png", patch_->pixels, {config_.png_compression, 0});
    state_.phase = Phase::deploy;
    return "patch seed " + std::to_string(state_.patch_seed) + ": " + render_prompt(state_.prompt);
  }

  const Patch& patch() {
    if (!patch_) {
      patch_ = Patch{read_png_rgba(dir_ / iteration_dir(state_.iteration) / "patch.png"), state_.prompt,
                     state_.patch_seed, state_.iteration - 1};
    }
    return *patch_;
  }

  std::string deploy() {
    const int k = state_.iteration;
    const Patch& p = patch();
    const double aspect = static_cast<double>(p.pixels.width) / p.pixels.height;
    std::string how = "kept";
    if (!state_.plan || state_.replan) {
      if (mode_.dagent_plans) {
        dagent::ProposeContext ctx;
        ctx.target_class = objective_.target_class;
        ctx.feedback = state_.plan_feedback;
        ctx.limits = {config_.scale_min, config_.scale_max, 45.0};
        if (!state_.history.empty()) ctx.detection_summary = detection_summary(objective_.target_class, state_.history.back());
        state_.plan = dagent::propose_plan(scene_, state_.regions, p, ctx, *backends_.llm, settings_);
        how = "proposed";
      } else {
        Rng rng(derive_seed(config_.rng_seed, "placement/" + std::to_string(k)));
        state_.plan = dagent::random_plan(scene_.width(), scene_.height(), aspect, state_.regions, rng);
        how = "random";
      }
      state_.replan = false;
      state_.plan_feedback.clear();
    }
    write_text_atomic(dir_ / iteration_dir(k) / "plan.json", json(*state_.plan).dump(2));
    state_.phase = Phase::composite;
    return how + " plan: " + to_string(state_.plan->method) + " region " + std::to_string(state_.plan->region_index) +
           " bbox " + bbox_text(state_.plan->bbox);
  }

  std::string do_composite() {
    const int k = state_.iteration;
    composite_ = compositor::composite(scene_, patch(), *state_.plan);
    composite_->id = scene_.id + "_it" + std::to_string(k);
    write_png(dir_ / iteration_dir(k) / "composite.png", composite_->pixels, {config_.png_compression, 0});
    state_.phase = Phase::examine;
    return "affine alpha paste into " + bbox_text(state_.plan->bbox);
  }

  const SceneImage& composite_image() {
    if (!composite_) {
      composite_ = SceneImage{scene_.id + "_it" + std::to_string(state_.iteration),
                              read_png_rgb(dir_ / iteration_dir(state_.iteration) / "composite.png"), ""};
    }
    return *composite_;
  }

  std::string examine() {
    const int k = state_.iteration;
    const SceneImage& comp = composite_image();
    const DeploymentPlan& plan = *state_.plan;
    const eagent::DetectionGate gate{config_.theta, config_.location_gate, config_.location_iou};

    eagent::DetectionResult det;
    eagent::NaturalityResult nat{1.0, true, "not evaluated in this mode"};
    if (mode_.naturality) {
      // The two checks use independent backends.
      auto nat_future = std::async(std::launch::async, [&] {
        return eagent::evaluate_naturality(comp, plan, *backends_.llm, config_.delta, settings_);
      });
      try {
        det = eagent::evaluate_detection(comp, plan, objective_, *backends_.detector, config_.target_detector, gate);
      } catch (...) {
        nat_future.wait();
        throw;
      }
      nat = nat_future.get();
    } else {
      det = eagent::evaluate_detection(comp, plan, objective_, *backends_.detector, config_.target_detector, gate);
    }

    IterationRecord rec;
    rec.iteration = k;
    rec.prompt = state_.prompt;
    rec.patch_ref = iteration_dir(k) + "/patch.png";
    rec.patch_seed = state_.patch_seed;
    rec.plan = plan;
    rec.detections = det.evidence;
    rec.verdict = eagent::decide(det.delta_s, nat.score, config_.theta, config_.delta, k, config_.max_iterations);
    rec.naturality_rationale = nat.rationale;
    state_.history.push_back(rec);

    const fs::path d = dir_ / iteration_dir(k);
    write_text_atomic(d / "detections.json", json(det.evidence).dump(2));
    write_text_atomic(d / "verdict.json", json(rec.verdict).dump(2));

    const Decision decision = rec.verdict.decision;
    if (decision == Decision::accept) {
      state_.status = RunStatus::accepted;
      state_.phase = Phase::done;
    } else if (decision == Decision::give_up) {
      state_.status = RunStatus::exhausted;
      state_.best_effort = best_iteration();
      state_.phase = Phase::done;
    } else {
      state_.phase = Phase::refine;
    }
    return "delta_s " + fixed(det.delta_s, 4) + ", naturality " + fixed(nat.score, 2) + " -> " + to_string(decision);
  }

  int best_iteration() const {
    const IterationRecord* best = nullptr;
    for (const auto& r : state_.history) {
      if (!best || r.verdict.delta_s > best->verdict.delta_s ||
          (r.verdict.delta_s == best->verdict.delta_s && r.verdict.naturality > best->verdict.naturality)) {
        best = &r;
      }
    }
    return best ? best->iteration : 0;
  }

  std::string refine() {
    IterationRecord& rec = state_.history.back();
    const Decision decision = rec.verdict.decision;

    std::vector<RefineDirective> directives;
    if (mode_.directives) {
      eagent::DirectiveContext ctx;
      ctx.decision = decision;
      ctx.prompt = state_.prompt;
      ctx.plan = *state_.plan;
      ctx.evidence = rec.detections;
      ctx.delta_s = rec.verdict.delta_s;
      ctx.naturality = rec.verdict.naturality;
      ctx.naturality_rationale = rec.naturality_rationale;
      ctx.patch = &patch().pixels;
      ctx.composite = &composite_image();
      directives = eagent::make_directives(ctx, *backends_.llm, settings_);
    }
    rec.verdict.directives = directives;
    write_text_atomic(dir_ / iteration_dir(rec.iteration) / "verdict.json", json(rec.verdict).dump(2));

    std::vector<RefineDirective> prompt_dirs, plan_dirs;
    for (const auto& d : directives) (d.target == DirectiveTarget::gagent ? prompt_dirs : plan_dirs).push_back(d);

    // Prompt before placement, as generation precedes deployment.
    if (decision == Decision::refine_prompt || decision == Decision::refine_both) {
      gagent::DetectionFeedback feedback;
      feedback.scene_result = detection_summary(objective_.target_class, rec);
      const gagent::SceneDescription desc = state_.scene_description.value_or(gagent::SceneDescription{});
      state_.prompt = gagent::refine_prompt(state_.prompt, desc, prompt_dirs, mode_.refine, backends_.llm.get(),
                                            settings_, &patch().pixels, feedback);
    }
    if (decision == Decision::refine_plan || decision == Decision::refine_both) {
      state_.replan = true;
      std::string notes;
      for (const auto& d : plan_dirs) notes += (notes.empty() ? "" : "; ") + d.detail;
      state_.plan_feedback = "previous plan " + json(*state_.plan).dump() + " was judged unnatural (naturality " +
                             fixed(rec.verdict.naturality, 2) + ")" + (notes.empty() ? "" : "; suggestions: " + notes);
    }
    state_.iteration += 1;
    state_.phase = Phase::generate;
    patch_.reset();
    composite_.reset();
    return std::to_string(directives.size()) + " directives for " + to_string(decision);
  }

  std::string finish() {
    write_reports();
    state_.finalized = true;
    return to_string(state_.status);
  }

  void write_reports() {
    json report = {{"run_id", state_.run_id},
                   {"scene_id", state_.scene_id},
                   {"target_class", objective_.target_class},
                   {"status", state_.status},
                   {"iterations", state_.history.size()},
                   {"ablation_mode", config_.ablation_mode},
                   {"theta", config_.theta},
                   {"delta", config_.delta},
                   {"compositing", "affine (scale, rotate, translate) alpha paste, fixed-point bilinear"},
                   {"error", state_.error}};
    report["best_effort"] = state_.best_effort ? json(*state_.best_effort) : json(nullptr);
    json hist = json::array();
    for (const auto& r : state_.history) {
      hist.push_back({{"iteration", r.iteration},
                      {"prompt", render_prompt(r.prompt)},
                      {"patch", r.patch_ref},
                      {"plan", r.plan},
                      {"delta_s", r.verdict.delta_s},
                      {"naturality", r.verdict.naturality},
                      {"decision", r.verdict.decision},
                      {"directives", r.verdict.directives}});
    }
    report["history"] = hist;
    write_text_atomic(dir_ / "report.json", report.dump(2));

    std::string md = "# Run " + state_.run_id + "\n\n";
    md += "- target: " + objective_.target_class + "\n- status: " + to_string(state_.status) + "\n";
    md += "- mode: " + to_string(config_.ablation_mode) + "\n";
    if (state_.best_effort) md += "- best effort: iteration " + std::to_string(*state_.best_effort) + "\n";
    if (!state_.error.empty()) md += "- error: " + state_.error + "\n";
    md += "\n| iter | delta_s | naturality | decision | placement | prompt |\n|---|---|---|---|---|---|\n";
    for (const auto& r : state_.history) {
      md += "| " + std::to_string(r.iteration) + " | " + fixed(r.verdict.delta_s, 4) + " | " +
            fixed(r.verdict.naturality, 2) + " | " + to_string(r.verdict.decision) + " | " + to_string(r.plan.method) +
            " r" + std::to_string(r.plan.region_index) + " " + bbox_text(r.plan.bbox) + " | " + render_prompt(r.prompt) +
            " |\n";
    }
    write_text_atomic(dir_ / "report.md", md);
  }

  fs::path dir_;
  SceneImage scene_;
  AttackObjective objective_;
  RunConfig config_;
  Backends backends_;
  std::function<void(const RunState&, Boundary)> hook_;
  AssetStore assets_;
  ModeTraits mode_;
  AgentSettings settings_;
  RunState state_;
  std::optional<Patch> patch_;
  std::optional<SceneImage> composite_;
};

std::string default_run_id(const SceneImage& scene, const AttackObjective& objective, std::uint64_t seed) {
  std::string target;
  for (char c : objective.target_class) target += c == ' ' ? '_' : c;
  return scene.id + "-" + target + "-" + std::to_string(seed);
}

}  // namespace

std::pair<RunConfig, AttackObjective> load_run_config(const fs::path& run_dir) {
  const fs::path path = run_dir / "config.json";
  try {
    const json j = json::parse(read_text(path));
    return {j.at("run").get<RunConfig>(), j.at("objective").get<AttackObjective>()};
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt run config " + path.string() + ": " + e.what());
  }
}

RunState load_state(const fs::path& run_dir) {
  const fs::path path = run_dir / "state.json";
  if (!fs::exists(path)) throw std::runtime_error("missing state file " + path.string());
  try {
    return json::parse(read_text(path)).get<RunState>();
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt state file " + path.string() + ": " + e.what());
  }
}

RunState run_pipeline(const SceneImage& scene, const AttackObjective& objective, const RunConfig& config,
                      const Backends& backends, const RunOptions& options) {
  if (auto v = validate(config); !v.empty()) throw std::invalid_argument("invalid config: " + v.front().message);
  if (auto v = validate(objective); !v.empty()) throw std::invalid_argument("invalid objective: " + v.front().message);
  if (!scene.valid()) throw std::invalid_argument("scene is not valid");

  RunState state;
  state.run_id = options.run_id.empty() ? default_run_id(scene, objective, config.rng_seed) : options.run_id;
  state.scene_id = scene.id;
  const fs::path dir = options.runs_root / state.run_id;
  if (fs::exists(dir / "state.json")) throw std::runtime_error("run directory already used: " + dir.string());
  fs::create_directories(dir);
  write_text_atomic(dir / "config.json", json{{"run", config}, {"objective", objective}}.dump(2));
  write_png(dir / "scene.png", scene.pixels, {config.png_compression, 0});

  Engine engine(dir, scene, objective, config, backends, options.after_phase);
  return engine.run(std::move(state));
}

RunState resume(const fs::path& run_dir, const Backends& backends,
                const std::function<void(const RunState&, Boundary)>& after_phase) {
  RunState state = load_state(run_dir);

  // A crash between saving the state and logging its event loses one line.
  const fs::path log = run_dir / "events.jsonl";
  const std::size_t logged = fs::exists(log) ? read_events(log).size() : 0;
  if (logged + 1 == state.events_written) {
    append_line(log, state.last_event.dump());
  } else if (logged != state.events_written) {
    throw std::runtime_error("event log " + log.string() + " has " + std::to_string(logged) +
                             " entries, state expects " + std::to_string(state.events_written));
  }
  if (state.finalized) return state;

  auto [config, objective] = load_run_config(run_dir);
  SceneImage scene{state.scene_id, read_png_rgb(run_dir / "scene.png"), (run_dir / "scene.png").string()};
  Engine engine(run_dir, std::move(scene), objective, config, backends, after_phase);
  return engine.run(std::move(state));
}

}  // namespace magic::orchestrator
