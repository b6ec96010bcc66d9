#include "magic/harness.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "magic/compositor.hpp"
#include "magic/dagent.hpp"

namespace magic::harness {

namespace fs = std::filesystem;

void to_json(json& j, const TrialRecord& v) {
  j = json{{"trial_id", v.trial_id},     {"condition", v.condition}, {"prompt_group", v.prompt_group},
           {"detector_id", v.detector_id}, {"detections", v.detections}, {"plan", v.plan},
           {"patch_ref", v.patch_ref}};
}

void from_json(const json& j, TrialRecord& v) {
  j.at("trial_id").get_to(v.trial_id);
  j.at("condition").get_to(v.condition);
  v.prompt_group = j.value("prompt_group", std::string{});
  j.at("detector_id").get_to(v.detector_id);
  j.at("detections").get_to(v.detections);
  j.at("plan").get_to(v.plan);
  v.patch_ref = j.value("patch_ref", std::string{});
}

bool valid_condition(const std::string& c) {
  if (c == "ndda_rand" || c == "ndda_dagent" || c == "magic") return true;
  if (c.rfind("ablation:", 0) == 0) return parse_ablation_mode(c.substr(9)).has_value();
  return false;
}

std::vector<std::string> check_record(const TrialRecord& r) {
  std::vector<std::string> out;
  if (r.trial_id.empty()) out.emplace_back("trial_id must be non-empty");
  if (!valid_condition(r.condition)) out.push_back("unknown condition '" + r.condition + "'");
  if (r.detector_id.empty()) out.emplace_back("detector_id must be non-empty");
  for (std::size_t i = 0; i < r.detections.size(); ++i) {
    const auto& d = r.detections[i];
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      out.push_back("detections[" + std::to_string(i) + "]: confidence out of range");
    }
    if (d.bbox.w < 0 || d.bbox.h < 0) out.push_back("detections[" + std::to_string(i) + "]: negative bbox size");
    if (i > 0 && d.confidence > r.detections[i - 1].confidence) {
      out.push_back("detections[" + std::to_string(i) + "]: not sorted by confidence");
    }
  }
  return out;
}

std::vector<TrialRecord> replay(const fs::path& fixture_file) {
  std::ifstream in(fixture_file);
  if (!in) throw std::runtime_error("cannot open fixture " + fixture_file.string());
  std::vector<TrialRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error(fixture_file.string() + ":" + std::to_string(n) + ": " + why);
    };
    TrialRecord rec;
    try {
      rec = json::parse(line).get<TrialRecord>();
    } catch (const std::exception& e) {
      fail(e.what());
    }
    if (auto problems = check_record(rec); !problems.empty()) fail(problems.front());
    out.push_back(std::move(rec));
  }
  return out;
}

void write_records(const fs::path& path, const std::vector<TrialRecord>& records) {
  std::string text;
  for (const auto& r : records) text += json(r).dump() + "\n";
  write_text_atomic(path, text);
}

bool trial_success(const TrialRecord& record, const std::string& target_class, const SuccessRule& rule) {
  return std::any_of(record.detections.begin(), record.detections.end(), [&](const Detection& d) {
    return d.label == target_class && d.confidence >= rule.conf_threshold &&
           (!rule.location_gate || iou(d.bbox, record.plan.bbox) >= rule.min_iou);
  });
}

std::size_t successes(const std::vector<TrialRecord>& records, const std::string& target_class,
                      const SuccessRule& rule) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const TrialRecord& r) {
    return trial_success(r, target_class, rule);
  }));
}

double asr(const std::vector<TrialRecord>& records, const std::string& target_class, const SuccessRule& rule) {
  if (records.empty()) throw std::invalid_argument("ASR needs at least one trial");
  if (!(rule.conf_threshold >= 0.0 && rule.conf_threshold <= 1.0)) {
    throw std::invalid_argument("confidence threshold must be in [0, 1]");
  }
  const double s = static_cast<double>(successes(records, target_class, rule));
  return truncate2(100.0 * s / static_cast<double>(records.size()));
}

double asr(const std::vector<TrialRecord>& records, const std::string& target_class, double conf_threshold) {
  return asr(records, target_class, SuccessRule{conf_threshold, true, 0.1});
}

// ---------------------------------------------------------------------------

Table build_table(const std::map<std::string, std::map<std::string, double>>& results,
                  const std::vector<std::string>& detectors, const std::vector<std::string>& order,
                  double threshold) {
  if (results.empty()) throw std::invalid_argument("table needs at least one condition");
  Table t;
  t.detectors = detectors;
  t.threshold = threshold;

  std::vector<std::string> conditions = order;
  for (const auto& [c, _] : results)
    if (std::find(conditions.begin(), conditions.end(), c) == conditions.end()) conditions.push_back(c);

  for (const auto& c : conditions) {
    auto it = results.find(c);
    if (it == results.end()) continue;
    TableRow row{c, {}};
    double sum = 0.0;
    for (const auto& d : detectors) {
      auto cell = it->second.find(d);
      if (cell == it->second.end()) throw std::invalid_argument("missing ASR for " + c + " / " + d);
      const double v = truncate2(cell->second);
      row.cells.push_back({v});
      sum += v;
    }
    row.cells.push_back({truncate2(sum / static_cast<double>(detectors.size()))});
    t.rows.push_back(std::move(row));
  }

  const std::size_t columns = detectors.size() + 1;
  for (std::size_t col = 0; col < columns; ++col) {
    std::set<double, std::greater<>> values;
    for (const auto& r : t.rows) values.insert(r.cells[col].value);
    const std::vector<double> ranked(values.begin(), values.end());
    for (auto& r : t.rows) {
      r.cells[col].best = r.cells[col].value == ranked[0];
      r.cells[col].second = ranked.size() > 1 && r.cells[col].value == ranked[1];
    }
  }
  return t;
}

std::string Table::to_markdown() const {
  std::string md = "| Condition |";
  for (const auto& d : detectors) md += " " + d + " |";
  md += " Avg. |\n|---|";
  for (std::size_t i = 0; i <= detectors.size(); ++i) md += "---|";
  md += "\n";
  for (const auto& r : rows) {
    md += "| " + r.condition + " |";
    for (const auto& c : r.cells) {
      std::string v = format2(c.value) + "%";
      if (c.best) v = "**" + v + "**";
      else if (c.second) v = "_" + v + "_";
      md += " " + v + " |";
    }
    md += "\n";
  }
  md += "\nConfidence threshold " + format2(threshold) + ". Bold: best, italic: second best.\n";
  return md;
}

json Table::to_json() const {
  json j = {{"threshold", threshold}, {"detectors", detectors}};
  j["rows"] = json::array();
  for (const auto& r : rows) {
    json cells = json::array();
    for (const auto& c : r.cells) cells.push_back({{"asr", format2(c.value)}, {"best", c.best}, {"second", c.second}});
    j["rows"].push_back({{"condition", r.condition}, {"cells", cells}});
  }
  return j;
}

std::map<std::string, std::map<std::string, std::vector<TrialRecord>>> load_fixture_dir(const fs::path& dir) {
  std::map<std::string, std::map<std::string, std::vector<TrialRecord>>> out;
  if (!fs::is_directory(dir)) throw std::runtime_error("fixture directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    for (auto& r : replay(f)) {
      auto& bucket = out[r.condition][r.detector_id];
      bucket.push_back(std::move(r));
    }
  }
  return out;
}

std::string row_label(const TrialRecord& record) {
  return record.prompt_group.empty() ? record.condition : record.condition + "[" + record.prompt_group + "]";
}

RecordSets group_by_row(const std::vector<TrialRecord>& records) {
  RecordSets out;
  for (const auto& r : records) out[row_label(r)][r.detector_id].push_back(r);
  return out;
}

std::vector<std::string> canonical_row_order(const RecordSets& sets) {
  const std::vector<std::string> conditions = {"ndda_rand", "ndda_dagent", "ablation:gagent_naive",
                                               "ablation:gagent_naive_dagent", "ablation:gagent_naive_eagent_ae",
                                               "magic"};
  const std::vector<std::string> groups = {"", "shape", "color", "text", "pattern", "all"};
  std::vector<std::string> order;
  for (const auto& c : conditions)
    for (const auto& g : groups) {
      const std::string label = g.empty() ? c : c + "[" + g + "]";
      if (sets.count(label)) order.push_back(label);
    }
  return order;
}

Table table_at(const RecordSets& sets, const std::string& target_class, const std::vector<std::string>& detectors,
               const SuccessRule& rule) {
  std::map<std::string, std::map<std::string, double>> results;
  for (const auto& [row, per_detector] : sets)
    for (const auto& d : detectors) {
      auto it = per_detector.find(d);
      if (it == per_detector.end()) throw std::invalid_argument("no records for " + row + " / " + d);
      results[row][d] = asr(it->second, target_class, rule);
    }
  return build_table(results, detectors, canonical_row_order(sets), rule.conf_threshold);
}

std::vector<TrialRecord> run_condition(const SceneImage& scene, const std::vector<Patch>& patches,
                                       const ConditionSetup& setup, const Backends& backends,
                                       const AgentSettings& settings, std::vector<TrialRecord>* partial) {
  if (!valid_condition(setup.condition)) throw std::invalid_argument("unknown condition " + setup.condition);
  if (patches.empty()) throw std::invalid_argument("run_condition needs at least one patch");
  const auto& assets = assets_of(settings);
  const auto regions = dagent::catalog_regions(scene, *backends.segmenter, dagent::SurfaceTable::load(assets));
  const bool random = setup.condition == "ndda_rand";
  const dagent::PlanLimits limits{setup.scale_min, setup.scale_max, 45.0};

  std::vector<TrialRecord> local;
  std::vector<TrialRecord>& out = partial ? *partial : local;
  out.clear();
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Patch& patch = patches[i];
    const double aspect = static_cast<double>(patch.pixels.width) / patch.pixels.height;
    TrialRecord rec;
    rec.trial_id = setup.condition + "-" + setup.detector_id + "-" + std::to_string(i + 1);
    rec.condition = setup.condition;
    rec.detector_id = setup.detector_id;
    if (random) {
      Rng rng(derive_seed(setup.seed, "trial/" + std::to_string(i)));
      rec.plan = dagent::random_plan(scene.width(), scene.height(), aspect, regions, rng);
    } else {
      dagent::ProposeContext ctx;
      ctx.target_class = setup.objective.target_class;
      ctx.limits = limits;
      rec.plan = dagent::propose_plan(scene, regions, patch, ctx, *backends.llm, settings);
    }
    SceneImage comp = compositor::composite(scene, patch, rec.plan);
    comp.id = scene.id + "_" + rec.trial_id;
    rec.detections = backends.detector->detect(comp, setup.detector_id, 0.0);
    if (!setup.patch_dir.empty()) {
      fs::create_directories(setup.patch_dir);
      const std::string name = "patch_" + std::to_string(i + 1) + ".png";
      if (!fs::exists(setup.patch_dir / name)) write_png(setup.patch_dir / name, patch.pixels, {1, 0});
      rec.patch_ref = name;
    }
    out.push_back(std::move(rec));
  }
  return partial ? *partial : local;
}

}  // namespace magic::harness
