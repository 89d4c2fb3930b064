#include "medeval/config.hpp"

#include <set>

#include "medeval/common.hpp"

namespace medeval {

using nlohmann::json;

json GlobalConfig::to_json() const {
  json windows_json = json::array();
  for (const volgrid::WindowSpec& w : windows) {
    windows_json.push_back({w.lo_hu, w.hi_hu});
  }
  return json{
      {"seed", seed},
      {"log_level", log_level},
      {"volgrid",
       {{"windows", windows_json},
        {"cap", volume_cap},
        {"max_slice_px", criteria.max_slice_px},
        {"min_slices", criteria.min_slices},
        {"uniform_thickness", criteria.uniform_thickness}}},
      {"slidegrid",
       {{"cap", patch_cap},
        {"sat_min", mask.sat_min},
        {"val_min", mask.val_min},
        {"val_max", mask.val_max},
        {"morph_radius", mask.morph_radius},
        {"min_component_cells", mask.min_component_cells},
        {"tissue_fraction_min", tissue_fraction_min},
        {"mag_probs", {{"p5", mag_probs.p5}, {"p10", mag_probs.p10}, {"p20", mag_probs.p20}}}}},
      {"promptforge", {{"templates_dir", templates_dir.string()}, {"fix_typos", fix_typos}}},
      {"medmetrics",
       {{"fuzzy_jaccard_min", matcher.fuzzy_jaccard_min},
        {"numeric_rel_tol", matcher.numeric_rel_tol}}},
      {"evalrunner",
       {{"temperature", temperature},
        {"max_output_tokens", max_output_tokens},
        {"max_in_flight", max_in_flight},
        {"retry_count", retry.count},
        {"retry_backoff_ms", retry.backoff_ms}}}};
}

namespace {

void reject_unknown(const json& section, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, _] : section.items()) {
    if (!known.count(key)) {
      throw ValidationError("config: unknown key '" + where + key + "'");
    }
  }
}

}  // namespace

GlobalConfig load_config(const std::optional<std::filesystem::path>& file) {
  GlobalConfig config;
  if (!file) return config;

  json j = json::parse(read_text_file(*file), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ValidationError("config file is not a JSON object: " + file->string());
  }
  reject_unknown(j, {"seed", "log_level", "volgrid", "slidegrid", "promptforge", "medmetrics",
                     "evalrunner"},
                 "");
  config.seed = j.value("seed", config.seed);
  config.log_level = j.value("log_level", config.log_level);

  if (j.contains("volgrid")) {
    const json& v = j["volgrid"];
    reject_unknown(v, {"windows", "cap", "max_slice_px", "min_slices", "uniform_thickness"},
                   "volgrid.");
    if (v.contains("windows")) {
      const json& w = v["windows"];
      if (!w.is_array() || w.size() != 3) {
        throw ValidationError("config: volgrid.windows must be three [lo, hi] pairs");
      }
      for (int c = 0; c < 3; ++c) {
        config.windows[c].lo_hu = w[c].at(0).get<double>();
        config.windows[c].hi_hu = w[c].at(1).get<double>();
        if (!(config.windows[c].lo_hu < config.windows[c].hi_hu)) {
          throw ValidationError("config: window lo must be below hi");
        }
      }
    }
    config.volume_cap = v.value("cap", config.volume_cap);
    config.criteria.max_slice_px = v.value("max_slice_px", config.criteria.max_slice_px);
    config.criteria.min_slices = v.value("min_slices", config.criteria.min_slices);
    config.criteria.uniform_thickness =
        v.value("uniform_thickness", config.criteria.uniform_thickness);
  }

  if (j.contains("slidegrid")) {
    const json& s = j["slidegrid"];
    reject_unknown(s,
                   {"cap", "sat_min", "val_min", "val_max", "morph_radius",
                    "min_component_cells", "tissue_fraction_min", "mag_probs"},
                   "slidegrid.");
    config.patch_cap = s.value("cap", config.patch_cap);
    config.mask.sat_min = s.value("sat_min", config.mask.sat_min);
    config.mask.val_min = s.value("val_min", config.mask.val_min);
    config.mask.val_max = s.value("val_max", config.mask.val_max);
    config.mask.morph_radius = s.value("morph_radius", config.mask.morph_radius);
    config.mask.min_component_cells =
        s.value("min_component_cells", config.mask.min_component_cells);
    config.tissue_fraction_min = s.value("tissue_fraction_min", config.tissue_fraction_min);
    if (s.contains("mag_probs")) {
      const json& p = s["mag_probs"];
      reject_unknown(p, {"p5", "p10", "p20"}, "slidegrid.mag_probs.");
      config.mag_probs.p5 = p.value("p5", config.mag_probs.p5);
      config.mag_probs.p10 = p.value("p10", config.mag_probs.p10);
      config.mag_probs.p20 = p.value("p20", config.mag_probs.p20);
    }
  }

  if (j.contains("promptforge")) {
    const json& p = j["promptforge"];
    reject_unknown(p, {"templates_dir", "fix_typos"}, "promptforge.");
    if (p.contains("templates_dir")) {
      config.templates_dir = p["templates_dir"].get<std::string>();
    }
    config.fix_typos = p.value("fix_typos", config.fix_typos);
  }

  if (j.contains("medmetrics")) {
    const json& m = j["medmetrics"];
    reject_unknown(m, {"fuzzy_jaccard_min", "numeric_rel_tol"}, "medmetrics.");
    config.matcher.fuzzy_jaccard_min =
        m.value("fuzzy_jaccard_min", config.matcher.fuzzy_jaccard_min);
    config.matcher.numeric_rel_tol = m.value("numeric_rel_tol", config.matcher.numeric_rel_tol);
  }

  if (j.contains("evalrunner")) {
    const json& e = j["evalrunner"];
    reject_unknown(e,
                   {"temperature", "max_output_tokens", "max_in_flight", "retry_count",
                    "retry_backoff_ms"},
                   "evalrunner.");
    config.temperature = e.value("temperature", config.temperature);
    config.max_output_tokens = e.value("max_output_tokens", config.max_output_tokens);
    config.max_in_flight = e.value("max_in_flight", config.max_in_flight);
    config.retry.count = e.value("retry_count", config.retry.count);
    config.retry.backoff_ms = e.value("retry_backoff_ms", config.retry.backoff_ms);
  }

  return config;
}

}  // namespace medeval
