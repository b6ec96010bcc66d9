#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "magic/agent_io.hpp"
#include "magic/backends.hpp"
#include "magic/domain.hpp"

namespace magic::harness {

struct TrialRecord {
  std::string trial_id;
  std::string condition;     // ndda_rand | ndda_dagent | magic | ablation:<mode>
  std::string prompt_group;  // removal category for the baselines, may be empty
  std::string detector_id;
  std::vector<Detection> detections;
  DeploymentPlan plan;
  std::string patch_ref;

  bool operator==(const TrialRecord&) const = default;
};

void to_json(json& j, const TrialRecord& v);
void from_json(const json& j, TrialRecord& v);

/// Empty when the condition name is one of the known conditions.
bool valid_condition(const std::string& condition);

/// Schema problems of one record; empty when valid.
std::vector<std::string> check_record(const TrialRecord& record);

/// Reads a JSON-lines fixture. Throws std::runtime_error naming the line of
/// the first invalid record.
std::vector<TrialRecord> replay(const std::filesystem::path& fixture_file);

void write_records(const std::filesystem::path& path, const std::vector<TrialRecord>& records);

struct SuccessRule {
  double conf_threshold = 0.5;
  bool location_gate = true;
  double min_iou = 0.1;
};

bool trial_success(const TrialRecord& record, const std::string& target_class, const SuccessRule& rule);

/// Number of successful trials.
std::size_t successes(const std::vector<TrialRecord>& records, const std::string& target_class,
                      const SuccessRule& rule);

/// 100 * successes / trials, truncated to two decimals. Throws on empty input.
double asr(const std::vector<TrialRecord>& records, const std::string& target_class, const SuccessRule& rule);
double asr(const std::vector<TrialRecord>& records, const std::string& target_class, double conf_threshold);

struct TableCell {
  double value = 0.0;
  bool best = false;
  bool second = false;
};

struct TableRow {
  std::string condition;
  std::vector<TableCell> cells;  // one per detector, then Avg
};

struct Table {
  std::vector<std::string> detectors;
  std::vector<TableRow> rows;
  double threshold = 0.5;

  [[nodiscard]] std::string to_markdown() const;
  [[nodiscard]] json to_json() const;
};

/// results[condition][detector] = ASR. Rows keep first-seen condition order
/// when `order` is given, else map order. Avg is the truncated mean of the
/// row; best and second-best are flagged per column.
Table build_table(const std::map<std::string, std::map<std::string, double>>& results,
                  const std::vector<std::string>& detectors, const std::vector<std::string>& order = {},
                  double threshold = 0.5);

/// Loads every <condition>_<detector>.jsonl under dir, keyed by condition then detector.
std::map<std::string, std::map<std::string, std::vector<TrialRecord>>> load_fixture_dir(
    const std::filesystem::path& dir);

/// Table row of a record: the condition, with the prompt group in brackets when set.
std::string row_label(const TrialRecord& record);

/// row label -> detector -> records.
using RecordSets = std::map<std::string, std::map<std::string, std::vector<TrialRecord>>>;

RecordSets group_by_row(const std::vector<TrialRecord>& records);

/// Baselines per removal group first, then ablations, then the full pipeline.
std::vector<std::string> canonical_row_order(const RecordSets& sets);

/// ASR table over every row at one success rule.
Table table_at(const RecordSets& sets, const std::string& target_class, const std::vector<std::string>& detectors,
               const SuccessRule& rule);

struct ConditionSetup {
  std::string condition;
  std::string detector_id;
  AttackObjective objective;
  std::uint64_t seed = 0;
  double scale_min = 0.02;
  double scale_max = 0.5;
  std::filesystem::path patch_dir;  // where patch files are written, empty to skip
};

/// One trial per patch: placement (random for ndda_rand, agent otherwise),
/// composite, detect. Records written so far are kept in `partial` when a
/// backend error aborts the run.
std::vector<TrialRecord> run_condition(const SceneImage& scene, const std::vector<Patch>& patches,
                                       const ConditionSetup& setup, const Backends& backends,
                                       const AgentSettings& settings, std::vector<TrialRecord>* partial = nullptr);

}  // namespace magic::harness
