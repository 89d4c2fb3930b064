#include "medeval/manifest.hpp"

#include <set>
#include <sstream>

#include "medeval/common.hpp"

namespace medeval::evalrunner {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& id, const std::string& what) {
  if (!ok) throw ValidationError("record '" + id + "': " + what);
}

}  // namespace

void validate_record(const ManifestRecord& r) {
  require(!r.example_id.empty(), r.example_id, "empty example_id");
  require(r.inputs.is_object(), r.example_id, "inputs must be an object");
  require(r.gold.is_object(), r.example_id, "gold must be an object");

  switch (r.task_kind) {
    case TaskKind::CtCls:
    case TaskKind::MrCls:
    case TaskKind::CtRateCls: {
      require(!r.conditions.empty(), r.example_id, "classification record needs conditions");
      require(r.inputs.contains("sequence"), r.example_id, "inputs.sequence missing");
      require(r.gold.contains("labels") && r.gold["labels"].is_object(), r.example_id,
              "gold.labels missing");
      for (const std::string& c : r.conditions) {
        require(r.gold["labels"].contains(c) && r.gold["labels"][c].is_boolean(), r.example_id,
                "gold.labels missing boolean for condition '" + c + "'");
      }
      if (r.task_kind == TaskKind::CtRateCls) {
        require(r.inputs.value("history", std::string{}).empty(), r.example_id,
                "CT-RATE records do not take a history");
      } else {
        require(!r.inputs.value("history", std::string{}).empty(), r.example_id,
                "inputs.history missing");
      }
      break;
    }
    case TaskKind::WsiReport:
      require(r.inputs.contains("patches"), r.example_id, "inputs.patches missing");
      require(r.inputs.contains("type_procedure"), r.example_id,
              "inputs.type_procedure missing");
      require(r.gold.contains("reference") && r.gold["reference"].is_string(), r.example_id,
              "gold.reference missing");
      break;
    case TaskKind::Temporal:
      require(r.inputs.contains("prior_image") && r.inputs.contains("current_image"),
              r.example_id, "inputs.prior_image/current_image missing");
      require(r.inputs.contains("pathology"), r.example_id, "inputs.pathology missing");
      require(r.gold.contains("class"), r.example_id, "gold.class missing");
      temporal_from_string(r.gold["class"].get<std::string>());
      break;
    case TaskKind::BboxLoc: {
      require(r.inputs.contains("image"), r.example_id, "inputs.image missing");
      require(r.inputs.contains("object"), r.example_id, "inputs.object missing");
      require(r.gold.contains("box") && r.gold["box"].is_array() && r.gold["box"].size() == 4,
              r.example_id, "gold.box must be [y0, x0, y1, x1]");
      const BBox box = gold_box(r);
      require(box.valid(), r.example_id, "gold.box violates bbox invariants");
      break;
    }
    case TaskKind::LabExtract:
      require(r.inputs.contains("images") && r.inputs["images"].is_array() &&
                  !r.inputs["images"].empty(),
              r.example_id, "inputs.images must be a non-empty list");
      require(r.gold.contains("entries") && r.gold["entries"].is_array(), r.example_id,
              "gold.entries missing");
      break;
    case TaskKind::TextMcq:
      require(r.inputs.contains("question"), r.example_id, "inputs.question missing");
      require(r.gold.contains("choice"), r.example_id, "gold.choice missing");
      break;
    case TaskKind::EhrNoteMcq:
      require(r.inputs.contains("discharge_note") && r.inputs.contains("question"),
              r.example_id, "inputs.discharge_note/question missing");
      require(r.inputs.contains("choices") && r.inputs["choices"].is_object(), r.example_id,
              "inputs.choices missing");
      for (const char* c : {"A", "B", "C", "D", "E"}) {
        require(r.inputs["choices"].contains(c), r.example_id,
                std::string("inputs.choices missing '") + c + "'");
      }
      require(r.gold.contains("choice"), r.example_id, "gold.choice missing");
      break;
  }
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path,
                                          std::optional<TaskKind> expected) {
  std::istringstream lines(read_text_file(path));
  std::vector<ManifestRecord> records;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(line_no) +
                            ": invalid JSON");
    }
    ManifestRecord r;
    r.example_id = j.at("example_id").get<std::string>();
    r.task_kind = promptforge::task_kind_from_string(j.at("task_kind").get<std::string>());
    r.inputs = j.value("inputs", json::object());
    r.gold = j.value("gold", json::object());
    if (j.contains("conditions")) {
      for (const auto& c : j["conditions"]) r.conditions.push_back(c.get<std::string>());
    }
    if (!seen.insert(r.example_id).second) {
      throw ValidationError("manifest " + path.string() + ": duplicate example_id '" +
                            r.example_id + "'");
    }
    if (expected && r.task_kind != *expected) {
      throw ValidationError("manifest " + path.string() + ": record '" + r.example_id +
                            "' has task_kind " + promptforge::to_string(r.task_kind) +
                            ", expected " + promptforge::to_string(*expected));
    }
    validate_record(r);
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    throw ValidationError("manifest " + path.string() + ": no records");
  }
  return records;
}

bool gold_label(const ManifestRecord& record, const std::string& condition) {
  return record.gold.at("labels").at(condition).get<bool>();
}

std::string gold_reference(const ManifestRecord& record) {
  return record.gold.at("reference").get<std::string>();
}

BBox gold_box(const ManifestRecord& record) {
  const json& b = record.gold.at("box");
  BBox box;
  box.y0 = b.at(0).get<double>();
  box.x0 = b.at(1).get<double>();
  box.y1 = b.at(2).get<double>();
  box.x1 = b.at(3).get<double>();
  box.label = record.inputs.value("object", std::string{});
  return box;
}

TemporalClass gold_temporal(const ManifestRecord& record) {
  return temporal_from_string(record.gold.at("class").get<std::string>());
}

std::vector<LabTestEntry> gold_lab_entries(const ManifestRecord& record) {
  std::vector<LabTestEntry> entries;
  for (const json& j : record.gold.at("entries")) entries.push_back(lab_entry_from_json(j));
  return entries;
}

char gold_choice(const ManifestRecord& record) {
  const std::string c = record.gold.at("choice").get<std::string>();
  if (c.size() != 1 || !std::isalpha(static_cast<unsigned char>(c[0]))) {
    throw ValidationError("record '" + record.example_id + "': gold.choice must be one letter");
  }
  return static_cast<char>(std::toupper(static_cast<unsigned char>(c[0])));
}

LabTestEntry lab_entry_from_json(const nlohmann::json& j) {
  LabTestEntry entry;
  const auto get = [&](const char* key) -> std::string {
    if (!j.contains(key)) return {};
    const json& v = j.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
  };
  entry.name = get("name");
  for (const char* field : kLabFields) lab_field(entry, field) = get(field);
  return entry;
}

nlohmann::json lab_entry_to_json(const LabTestEntry& entry) {
  json j;
  j["name"] = entry.name;
  for (const char* field : kLabFields) j[field] = lab_field(entry, field);
  return j;
}

}  // namespace medeval::evalrunner
