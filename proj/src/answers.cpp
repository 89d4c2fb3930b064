#include "medeval/answers.hpp"

#include "medeval/common.hpp"

namespace medeval {

const std::string& lab_field(const LabTestEntry& entry, const std::string& field) {
  return lab_field(const_cast<LabTestEntry&>(entry), field);
}

std::string& lab_field(LabTestEntry& entry, const std::string& field) {
  if (field == "name") return entry.name;
  if (field == "result") return entry.result;
  if (field == "unit") return entry.unit;
  if (field == "range") return entry.range;
  if (field == "panel") return entry.panel;
  if (field == "method") return entry.method;
  if (field == "specimen") return entry.specimen;
  if (field == "sample_collection_time") return entry.sample_collection_time;
  throw ValidationError("unknown lab field: " + field);
}

std::string to_string(TemporalClass c) {
  switch (c) {
    case TemporalClass::Improved: return "IMPROVED";
    case TemporalClass::Stable: return "STABLE";
    default: return "WORSENED";
  }
}

TemporalClass temporal_from_string(const std::string& s) {
  const std::string u = to_lower(s);
  if (u == "improved") return TemporalClass::Improved;
  if (u == "stable") return TemporalClass::Stable;
  if (u == "worsened") return TemporalClass::Worsened;
  throw ValidationError("unknown temporal class: " + s);
}

}  // namespace medeval
