#include "medeval/volgrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medeval/common.hpp"

namespace medeval::volgrid {

std::string to_string(Modality m) { return m == Modality::CT ? "CT" : "MR"; }

std::string to_string(Orientation o) {
  switch (o) {
    case Orientation::Axial: return "AXIAL";
    case Orientation::Sagittal: return "SAGITTAL";
    case Orientation::Coronal: return "CORONAL";
    default: return "OTHER";
  }
}

Modality modality_from_string(const std::string& s) {
  const std::string u = to_lower(s);
  if (u == "ct") return Modality::CT;
  if (u == "mr" || u == "mri") return Modality::MR;
  throw ValidationError("unknown modality: " + s);
}

Orientation orientation_from_string(const std::string& s) {
  const std::string u = to_lower(s);
  if (u == "axial") return Orientation::Axial;
  if (u == "sagittal") return Orientation::Sagittal;
  if (u == "coronal") return Orientation::Coronal;
  if (u == "other") return Orientation::Other;
  throw ValidationError("unknown orientation: " + s);
}

void VoxelVolume::validate() const {
  if (width <= 0 || height <= 0 || n_slices < 1) {
    throw ValidationError("volume " + series_id + ": dims must be positive with n_slices >= 1");
  }
  const std::size_t expected = static_cast<std::size_t>(width) * height * n_slices;
  if (voxels.size() != expected) {
    throw ValidationError("volume " + series_id + ": voxel buffer size " +
                          std::to_string(voxels.size()) + " != dims product " +
                          std::to_string(expected));
  }
  if (slice_thickness_mm.size() != static_cast<std::size_t>(n_slices)) {
    throw ValidationError("volume " + series_id + ": thickness list length " +
                          std::to_string(slice_thickness_mm.size()) + " != n_slices " +
                          std::to_string(n_slices));
  }
  for (double t : slice_thickness_mm) {
    if (!(t > 0.0)) throw ValidationError("volume " + series_id + ": non-positive slice thickness");
  }
}

WindowTriple default_ct_windows() {
  return WindowTriple{WindowSpec{-1024.0, 1024.0}, WindowSpec{-135.0, 215.0},
                      WindowSpec{0.0, 80.0}};
}

namespace {

void check_windows(const WindowTriple& windows) {
  for (const WindowSpec& w : windows) {
    if (!(w.lo_hu < w.hi_hu)) {
      throw ValidationError("window lo_hu must be below hi_hu");
    }
  }
}

std::uint8_t window_value(double v, const WindowSpec& w) {
  const double unit = std::clamp((v - w.lo_hu) / (w.hi_hu - w.lo_hu), 0.0, 1.0);
  return round_half_up_byte(255.0 * unit);
}

std::string sanitize_for_filename(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("volume") : out;
}

std::string zero_pad4(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", v);
  return buf;
}

}  // namespace

RgbImage window_ct_slice(const float* hu, int width, int height,
                         const WindowTriple& windows) {
  check_windows(windows);
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float v = hu[static_cast<std::size_t>(y) * width + x];
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite voxel at (x=" + std::to_string(x) +
                              ", y=" + std::to_string(y) + ")");
      }
      std::uint8_t* p = out.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = window_value(v, windows[c]);
    }
  }
  return out;
}

MrNormalizeResult normalize_mr_volume(const VoxelVolume& volume) {
  if (volume.modality != Modality::MR) {
    throw ValidationError("normalize_mr_volume: volume " + volume.series_id + " is not MR");
  }
  volume.validate();

  float lo = volume.voxels.empty() ? 0.0f : volume.voxels[0];
  float hi = lo;
  for (std::size_t i = 0; i < volume.voxels.size(); ++i) {
    const float v = volume.voxels[i];
    if (!std::isfinite(v)) {
      const std::size_t plane = static_cast<std::size_t>(volume.width) * volume.height;
      const int z = static_cast<int>(i / plane);
      const int y = static_cast<int>((i % plane) / volume.width);
      const int x = static_cast<int>(i % volume.width);
      throw ValidationError("non-finite voxel at (x=" + std::to_string(x) + ", y=" +
                            std::to_string(y) + ", z=" + std::to_string(z) + ") in series " +
                            volume.series_id);
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  MrNormalizeResult result;
  const bool degenerate = !(hi > lo);
  if (degenerate) {
    result.warning = "series " + volume.series_id +
                     ": constant volume (max == min), emitting all-zero slices";
  }
  const double range = static_cast<double>(hi) - lo;
  for (int z = 0; z < volume.n_slices; ++z) {
    RgbImage img(volume.width, volume.height);
    const float* s = volume.slice(z);
    for (int y = 0; y < volume.height; ++y) {
      for (int x = 0; x < volume.width; ++x) {
        const std::uint8_t g =
            degenerate ? 0
                       : round_half_up_byte(
                             255.0 *
                             (s[static_cast<std::size_t>(y) * volume.width + x] - lo) / range);
        std::uint8_t* p = img.px(x, y);
        p[0] = p[1] = p[2] = g;
      }
    }
    result.slices.push_back(std::move(img));
  }
  return result;
}

FilterResult filter_volumes(std::vector<VoxelVolume> volumes,
                            const StackCriteria& criteria) {
  FilterResult result;
  for (VoxelVolume& v : volumes) {
    v.validate();
    std::vector<std::string> reasons;
    if (v.width > criteria.max_slice_px || v.height > criteria.max_slice_px) {
      reasons.push_back("max " + std::to_string(criteria.max_slice_px) + "x" +
                        std::to_string(criteria.max_slice_px));
    }
    if (v.orientation != criteria.required_orientation) {
      reasons.push_back("axial orientation");
    }
    if (criteria.uniform_thickness && !v.slice_thickness_mm.empty()) {
      const double first = v.slice_thickness_mm.front();
      const bool uniform = std::all_of(v.slice_thickness_mm.begin(), v.slice_thickness_mm.end(),
                                       [&](double t) { return t == first; });
      if (!uniform) reasons.push_back("uniform thickness");
    }
    if (v.n_slices < criteria.min_slices) {
      reasons.push_back("min " + std::to_string(criteria.min_slices) + " slices");
    }
    if (reasons.empty()) {
      result.admitted.push_back(std::move(v));
    } else {
      result.rejected.push_back(RejectedVolume{v.series_id, std::move(reasons)});
    }
  }
  return result;
}

std::vector<StackedSlice> zstack(const std::vector<VoxelVolume>& admitted) {
  std::vector<const VoxelVolume*> order;
  order.reserve(admitted.size());
  for (const VoxelVolume& v : admitted) order.push_back(&v);
  std::sort(order.begin(), order.end(), [](const VoxelVolume* a, const VoxelVolume* b) {
    return a->series_id < b->series_id;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->series_id == order[i - 1]->series_id) {
      throw ValidationError("duplicate series_id: " + order[i]->series_id);
    }
  }
  std::vector<StackedSlice> stacked;
  for (const VoxelVolume* v : order) {
    for (int z = 0; z < v->n_slices; ++z) stacked.push_back(StackedSlice{v->series_id, z});
  }
  return stacked;
}

std::vector<int> sample_equidistant(int n_total, int cap) {
  if (n_total < 1) throw ValidationError("sample_equidistant: n_total must be >= 1");
  if (cap < 2) throw ValidationError("sample_equidistant: cap must be >= 2");
  std::vector<int> indices;
  if (n_total <= cap) {
    indices.resize(n_total);
    for (int i = 0; i < n_total; ++i) indices[i] = i;
    return indices;
  }
  indices.reserve(cap);
  for (int k = 0; k < cap; ++k) {
    indices.push_back(static_cast<int>(
        (static_cast<std::int64_t>(k) * (n_total - 1)) / (cap - 1)));
  }
  return indices;
}

RenderResult render_sequence(std::vector<VoxelVolume> volumes,
                             const StackCriteria& criteria,
                             const WindowTriple& windows, int cap) {
  check_windows(windows);
  FilterResult filtered = filter_volumes(std::move(volumes), criteria);
  RenderResult result;
  result.rejected = filtered.rejected;
  if (filtered.admitted.empty()) {
    std::ostringstream msg;
    msg << "no admissible volumes";
    for (const RejectedVolume& r : result.rejected) {
      msg << "; " << r.series_id << ":";
      for (const std::string& reason : r.reasons) msg << " [" << reason << "]";
    }
    throw ValidationError(msg.str());
  }

  const Modality modality = filtered.admitted.front().modality;
  for (const VoxelVolume& v : filtered.admitted) {
    if (v.modality != modality) {
      throw ValidationError("mixed modalities in one study: " + v.series_id);
    }
  }

  std::map<std::string, const VoxelVolume*> by_series;
  for (const VoxelVolume& v : filtered.admitted) by_series[v.series_id] = &v;

  const std::vector<StackedSlice> stacked = zstack(filtered.admitted);
  const std::vector<int> picks = sample_equidistant(static_cast<int>(stacked.size()), cap);

  // MR mapping is volume-global, so normalize whole volumes up front.
  std::map<std::string, MrNormalizeResult> mr_slices;
  if (modality == Modality::MR) {
    std::set<std::string> needed;
    for (int idx : picks) needed.insert(stacked[idx].series_id);
    for (const std::string& sid : needed) {
      MrNormalizeResult norm = normalize_mr_volume(*by_series.at(sid));
      if (norm.warning) result.warnings.push_back(*norm.warning);
      mr_slices.emplace(sid, std::move(norm));
    }
  }

  SliceSequence seq;
  seq.cap = cap;
  seq.modality = modality;
  for (const auto& [sid, vol] : by_series) seq.source_series.push_back(sid);

  for (int idx : picks) {
    const StackedSlice& s = stacked[idx];
    const VoxelVolume& vol = *by_series.at(s.series_id);
    RgbImage mapped;
    if (modality == Modality::CT) {
      mapped = window_ct_slice(vol.slice(s.z), vol.width, vol.height, windows);
    } else {
      mapped = mr_slices.at(s.series_id).slices[s.z];
    }
    SliceEntry entry;
    entry.global_index = idx;
    entry.series_id = s.series_id;
    entry.z = s.z;
    entry.image = resize_bilinear(mapped, kSliceEdge, kSliceEdge);
    seq.entries.push_back(std::move(entry));
  }
  result.sequence = std::move(seq);
  return result;
}

std::int64_t vision_token_count(std::int64_t n_images) {
  if (n_images < 0) throw ValidationError("vision_token_count: n_images must be >= 0");
  return kTokensPerImage * n_images;
}

// ---- study I/O ------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_sidecar(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t colon = t.find(':');
    if (colon == std::string_view::npos) {
      throw ValidationError("sidecar " + path.string() + ": malformed line '" + line + "'");
    }
    kv[std::string(trim(t.substr(0, colon)))] = std::string(trim(t.substr(colon + 1)));
  }
  return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, const std::filesystem::path& path) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw ValidationError("sidecar " + path.string() + ": missing key '" + key + "'");
  }
  return it->second;
}

}  // namespace

VoxelVolume load_volume(const std::filesystem::path& raw_path,
                        const std::filesystem::path& meta_path) {
  const auto kv = parse_sidecar(meta_path);
  VoxelVolume v;
  v.series_id = require_key(kv, "series_id", meta_path);
  v.modality = modality_from_string(require_key(kv, "modality", meta_path));
  v.width = std::stoi(require_key(kv, "width", meta_path));
  v.height = std::stoi(require_key(kv, "height", meta_path));
  v.n_slices = std::stoi(require_key(kv, "slices", meta_path));
  v.spacing_x_mm = std::stod(require_key(kv, "spacing_x_mm", meta_path));
  v.spacing_y_mm = std::stod(require_key(kv, "spacing_y_mm", meta_path));
  v.orientation = orientation_from_string(require_key(kv, "orientation", meta_path));

  const std::vector<std::string> thickness =
      split_whitespace(require_key(kv, "thickness_mm", meta_path));
  if (thickness.size() == 1) {
    v.slice_thickness_mm.assign(v.n_slices, std::stod(thickness[0]));
  } else {
    for (const std::string& t : thickness) v.slice_thickness_mm.push_back(std::stod(t));
  }

  const std::string dtype = kv.count("dtype") ? kv.at("dtype") : "float32";
  const std::vector<std::uint8_t> raw = read_binary_file(raw_path);
  const std::size_t n = static_cast<std::size_t>(v.width) * v.height *
                        static_cast<std::size_t>(std::max(v.n_slices, 0));
  v.voxels.resize(n);
  if (dtype == "float32") {
    if (raw.size() != n * 4) {
      throw ValidationError("raw file " + raw_path.string() + ": size " +
                            std::to_string(raw.size()) + " != " + std::to_string(n * 4));
    }
    std::memcpy(v.voxels.data(), raw.data(), raw.size());
  } else if (dtype == "int16") {
    if (raw.size() != n * 2) {
      throw ValidationError("raw file " + raw_path.string() + ": size " +
                            std::to_string(raw.size()) + " != " + std::to_string(n * 2));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::int16_t s = static_cast<std::int16_t>(
          static_cast<std::uint16_t>(raw[2 * i]) |
          (static_cast<std::uint16_t>(raw[2 * i + 1]) << 8));
      v.voxels[i] = static_cast<float>(s);
    }
  } else {
    throw ValidationError("sidecar " + meta_path.string() + ": unsupported dtype '" + dtype + "'");
  }
  v.validate();
  return v;
}

std::vector<VoxelVolume> load_study(const std::filesystem::path& study_dir) {
  if (!std::filesystem::is_directory(study_dir)) {
    throw IoError("study directory not found: " + study_dir.string());
  }
  std::vector<std::filesystem::path> metas;
  for (const auto& entry : std::filesystem::directory_iterator(study_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".meta") {
      metas.push_back(entry.path());
    }
  }
  std::sort(metas.begin(), metas.end());
  if (metas.empty()) {
    throw ValidationError("study directory has no .meta sidecars: " + study_dir.string());
  }
  std::vector<VoxelVolume> volumes;
  for (const auto& meta : metas) {
    std::filesystem::path raw = meta;
    raw.replace_extension(".raw");
    if (!std::filesystem::exists(raw)) {
      throw ValidationError("missing raw file for sidecar: " + meta.string());
    }
    volumes.push_back(load_volume(raw, meta));
  }
  return volumes;
}

void save_volume(const std::filesystem::path& dir, const std::string& stem,
                 const VoxelVolume& volume) {
  volume.validate();
  std::filesystem::create_directories(dir);
  std::ostringstream meta;
  meta << "series_id: " << volume.series_id << "\n"
       << "modality: " << to_string(volume.modality) << "\n"
       << "width: " << volume.width << "\n"
       << "height: " << volume.height << "\n"
       << "slices: " << volume.n_slices << "\n"
       << "spacing_x_mm: " << volume.spacing_x_mm << "\n"
       << "spacing_y_mm: " << volume.spacing_y_mm << "\n"
       << "orientation: " << to_string(volume.orientation) << "\n"
       << "dtype: float32\n"
       << "thickness_mm:";
  for (double t : volume.slice_thickness_mm) meta << " " << t;
  meta << "\n";
  write_text_file(dir / (stem + ".meta"), meta.str());

  std::vector<std::uint8_t> raw(volume.voxels.size() * 4);
  std::memcpy(raw.data(), volume.voxels.data(), raw.size());
  write_binary_file(dir / (stem + ".raw"), raw);
}

SequenceManifest write_sequence(const SliceSequence& sequence,
                                const std::string& study_id,
                                const std::filesystem::path& out_dir) {
  const std::filesystem::path study_dir = out_dir / study_id;
  std::filesystem::create_directories(study_dir);

  SequenceManifest manifest;
  manifest.study_id = study_id;
  manifest.modality = sequence.modality;
  manifest.vision_tokens = vision_token_count(static_cast<std::int64_t>(sequence.entries.size()));

  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < sequence.entries.size(); ++i) {
    const SliceEntry& e = sequence.entries[i];
    const std::string name = zero_pad4(static_cast<int>(i)) + "_" +
                             sanitize_for_filename(e.series_id) + "_" + zero_pad4(e.z) + ".png";
    save_png(study_dir / name, e.image);
    manifest.files.push_back(name);
    entries.push_back({{"global_index", e.global_index},
                       {"series_id", e.series_id},
                       {"z", e.z},
                       {"file", name}});
  }

  nlohmann::json j{{"study", study_id},
                   {"modality", to_string(sequence.modality)},
                   {"cap", sequence.cap},
                   {"vision_tokens", manifest.vision_tokens},
                   {"entries", entries}};
  write_text_file(study_dir / "sequence.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace medeval::volgrid
