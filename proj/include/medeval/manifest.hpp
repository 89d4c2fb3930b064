#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medeval/answers.hpp"
#include "medeval/promptforge.hpp"

namespace medeval::evalrunner {

using promptforge::TaskKind;

/// One evaluation example from a line-delimited manifest. `inputs` and `gold`
/// stay task-shaped JSON; the typed accessors below validate on read.
struct ManifestRecord {
  std::string example_id;
  TaskKind task_kind = TaskKind::TextMcq;
  nlohmann::json inputs;
  nlohmann::json gold;
  std::vector<std::string> conditions;
};

/// Checks the gold/input shape against the record's task kind.
void validate_record(const ManifestRecord& record);

/// Loads a JSONL manifest, enforcing unique example ids and (when given) a
/// single expected task kind.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path,
                                          std::optional<TaskKind> expected = std::nullopt);

// Typed gold accessors.
bool gold_label(const ManifestRecord& record, const std::string& condition);
std::string gold_reference(const ManifestRecord& record);
BBox gold_box(const ManifestRecord& record);
TemporalClass gold_temporal(const ManifestRecord& record);
std::vector<LabTestEntry> gold_lab_entries(const ManifestRecord& record);
char gold_choice(const ManifestRecord& record);

LabTestEntry lab_entry_from_json(const nlohmann::json& j);
nlohmann::json lab_entry_to_json(const LabTestEntry& entry);

}  // namespace medeval::evalrunner
