#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "medeval/endpoint.hpp"
#include "medeval/medmetrics.hpp"
#include "medeval/slidegrid.hpp"
#include "medeval/volgrid.hpp"

namespace medeval {

/// Every ledgered default in one place, overridable from a JSON config file.
/// The effective values echo verbatim into run metadata via to_json().
struct GlobalConfig {
  std::uint64_t seed = 0;
  std::string log_level = "info";

  // volgrid
  volgrid::WindowTriple windows = volgrid::default_ct_windows();
  int volume_cap = volgrid::kSliceCap;
  volgrid::StackCriteria criteria;

  // slidegrid
  int patch_cap = slidegrid::kPatchCap;
  slidegrid::MaskParams mask;
  double tissue_fraction_min = 0.10;
  slidegrid::MagnificationDistribution mag_probs;

  // promptforge
  std::filesystem::path templates_dir = "templates";
  bool fix_typos = false;

  // medmetrics
  medmetrics::MatcherParams matcher;

  // evalrunner
  double temperature = 0.0;
  int max_output_tokens = 1024;
  int max_in_flight = 8;
  evalrunner::RetryPolicy retry;

  nlohmann::json to_json() const;
};

/// Defaults overlaid with the optional config file. Unknown keys are
/// rejected so typos do not silently fall back to defaults.
GlobalConfig load_config(const std::optional<std::filesystem::path>& file);

}  // namespace medeval
