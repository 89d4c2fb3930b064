#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medeval/endpoint.hpp"
#include "medeval/manifest.hpp"
#include "medeval/promptforge.hpp"

namespace medeval::evalrunner {

struct RunConfig {
  TaskKind task = TaskKind::TextMcq;
  EndpointConfig endpoint;
  promptforge::ModelKind model_kind = promptforge::ModelKind::MedGemma;
  /// Thinking defaults to on for the text MCQ tasks, matching the evaluated
  /// configuration; explicit override wins.
  std::optional<bool> thinking;
  std::filesystem::path templates_dir = "templates";
  bool fix_typos = false;
  /// Wall-clock stamps are off by default so reports re-emit byte-identically.
  bool stamp_time = false;
  nlohmann::json config_echo = nlohmann::json::object();
};

struct PerExampleRow {
  std::string example_id;
  std::string condition;  // empty unless per-condition classification
  std::string prompt_digest;
  std::string reply;
  nlohmann::json parsed;  // typed parse as JSON; null on ParseMiss
  nlohmann::json score;   // per-example score fields, task-shaped
  std::string error;      // "", "TransportError", "EndpointError", ...
};

struct EvalReport {
  nlohmann::json metadata;
  std::vector<PerExampleRow> per_example;
  nlohmann::json aggregates;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Renders, calls the endpoint under the bounded in-flight pool, parses,
/// scores, and aggregates. Per-call failures are recorded and scored wrong;
/// the run continues.
EvalReport run_eval(const std::vector<ManifestRecord>& manifest, Endpoint& endpoint,
                    const RunConfig& config);

/// Offline scoring of prepared replies keyed by (example_id, condition).
/// Missing replies score as wrong with a "missing_prediction" error.
EvalReport score_predictions(const std::vector<ManifestRecord>& manifest,
                             const std::map<std::pair<std::string, std::string>, std::string>& replies,
                             const RunConfig& config);

/// Line-delimited {"example_id", "condition"?, "reply"} prediction files.
std::map<std::pair<std::string, std::string>, std::string> load_predictions(
    const std::filesystem::path& path);

/// Writes report.json and summary.csv (one row per task x condition
/// aggregate) into out_dir.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

/// Recomputes every aggregate from the per-example rows.
struct VerifyResult {
  bool ok = true;
  std::string mismatch;  // name of the first disagreeing aggregate
};
VerifyResult verify_report(const EvalReport& report);
VerifyResult verify_report_file(const std::filesystem::path& report_json);

/// Recomputed aggregates for a set of rows (also used by verify_report).
nlohmann::json aggregate_rows(TaskKind task, const std::vector<PerExampleRow>& rows);

}  // namespace medeval::evalrunner
