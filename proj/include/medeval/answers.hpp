#pragma once

#include <string>
#include <vector>

namespace medeval {

/// Normalized bounding box, corners as fractions of the image:
/// (y0, x0) top-left, (y1, x1) bottom-right.
struct BBox {
  double y0 = 0.0;
  double x0 = 0.0;
  double y1 = 0.0;
  double x1 = 0.0;
  std::string label;

  double area() const { return (y1 - y0) * (x1 - x0); }
  bool valid() const {
    return 0.0 <= y0 && y0 <= y1 && y1 <= 1.0 && 0.0 <= x0 && x0 <= x1 && x1 <= 1.0;
  }
};

/// One extracted lab test. Absent attributes are empty strings.
struct LabTestEntry {
  std::string name;
  std::string result;
  std::string unit;
  std::string range;
  std::string panel;
  std::string method;
  std::string specimen;
  std::string sample_collection_time;  // DD-MM-YYYY HH:MM:SS when present

  bool operator==(const LabTestEntry&) const = default;
};

inline constexpr const char* kLabFields[] = {"result",   "unit",   "range",
                                             "panel",    "method", "specimen",
                                             "sample_collection_time"};

const std::string& lab_field(const LabTestEntry& entry, const std::string& field);
std::string& lab_field(LabTestEntry& entry, const std::string& field);

enum class TemporalClass { Improved, Stable, Worsened };

std::string to_string(TemporalClass c);
TemporalClass temporal_from_string(const std::string& s);

}  // namespace medeval
