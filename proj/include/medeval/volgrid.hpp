#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medeval/image.hpp"

namespace medeval::volgrid {

enum class Modality { CT, MR };
enum class Orientation { Axial, Sagittal, Coronal, Other };

std::string to_string(Modality m);
std::string to_string(Orientation o);
Modality modality_from_string(const std::string& s);
Orientation orientation_from_string(const std::string& s);

/// One scanner volume: a z-major scalar grid plus acquisition metadata.
/// CT voxels are Hounsfield Units, MR voxels arbitrary nonnegative scalars.
struct VoxelVolume {
  std::string series_id;
  Modality modality = Modality::CT;
  int width = 0;
  int height = 0;
  int n_slices = 0;
  double spacing_x_mm = 1.0;
  double spacing_y_mm = 1.0;
  std::vector<double> slice_thickness_mm;  // one entry per slice
  Orientation orientation = Orientation::Axial;
  std::vector<float> voxels;  // slice z starts at z * width * height

  const float* slice(int z) const {
    return voxels.data() + static_cast<std::size_t>(z) * width * height;
  }
  float at(int x, int y, int z) const {
    return voxels[(static_cast<std::size_t>(z) * height + y) * width + x];
  }

  /// Checks structural invariants (dims vs. buffer size, thickness length).
  void validate() const;
};

/// Linear HU window for one output channel.
struct WindowSpec {
  double lo_hu = 0.0;
  double hi_hu = 0.0;
};

using WindowTriple = std::array<WindowSpec, 3>;

/// R (-1024, 1024), G (-135, 215), B (0, 80).
WindowTriple default_ct_windows();

/// Admission rules for stacking a volume into the model input sequence.
struct StackCriteria {
  int max_slice_px = 512;
  Orientation required_orientation = Orientation::Axial;
  bool uniform_thickness = true;
  int min_slices = 5;
};

inline constexpr int kSliceCap = 85;
inline constexpr int kSliceEdge = 896;
inline constexpr int kTokensPerImage = 256;

struct SliceEntry {
  int global_index = 0;    // position in the stacked (pre-cap) volume
  std::string series_id;   // source volume
  int z = 0;               // slice index within the source volume
  RgbImage image;          // exactly 896x896 RGB
};

struct SliceSequence {
  std::vector<SliceEntry> entries;
  int cap = kSliceCap;
  std::vector<std::string> source_series;
  Modality modality = Modality::CT;
};

struct RejectedVolume {
  std::string series_id;
  std::vector<std::string> reasons;
};

struct FilterResult {
  std::vector<VoxelVolume> admitted;
  std::vector<RejectedVolume> rejected;
};

/// Maps one HU slice to RGB through the three channel windows:
/// out = round(255 * clamp((v - lo) / (hi - lo), 0, 1)), half-up rounding.
/// Throws ValidationError naming the voxel position on non-finite input.
RgbImage window_ct_slice(const float* hu, int width, int height,
                         const WindowTriple& windows);

struct MrNormalizeResult {
  std::vector<RgbImage> slices;  // grayscale written to all three channels
  std::optional<std::string> warning;
};

/// Min-max normalization with the scale computed over the whole volume,
/// not per slice. A constant volume yields all-zero slices plus a warning.
MrNormalizeResult normalize_mr_volume(const VoxelVolume& volume);

/// Splits volumes into admitted and rejected per the stacking criteria.
/// Rejection is a result, not an error.
FilterResult filter_volumes(std::vector<VoxelVolume> volumes,
                            const StackCriteria& criteria);

struct StackedSlice {
  std::string series_id;
  int z = 0;
};

/// Orders admitted volumes by series_id ascending, slices by z ascending,
/// and concatenates. Duplicate series ids are a validation error.
std::vector<StackedSlice> zstack(const std::vector<VoxelVolume>& admitted);

/// Equidistant index selection over [0, n_total): identity when under the
/// cap, otherwise floor(k * (n_total - 1) / (cap - 1)) for k in [0, cap).
std::vector<int> sample_equidistant(int n_total, int cap = kSliceCap);

struct RenderResult {
  SliceSequence sequence;
  std::vector<RejectedVolume> rejected;
  std::vector<std::string> warnings;
};

/// Full pipeline: filter -> zstack -> equidistant sample -> value mapping ->
/// bilinear stretch to 896x896. Throws when no volume is admissible, with
/// the per-volume rejection reasons in the message.
RenderResult render_sequence(std::vector<VoxelVolume> volumes,
                             const StackCriteria& criteria = {},
                             const WindowTriple& windows = default_ct_windows(),
                             int cap = kSliceCap);

/// 256 vision tokens per image.
std::int64_t vision_token_count(std::int64_t n_images);

// ---- study I/O ------------------------------------------------------------
//
// A study directory holds one `<stem>.raw` + `<stem>.meta` pair per volume.
// The .raw file is little-endian scalars (z-major); the .meta sidecar is
// `key: value` lines with keys series_id, modality, width, height, slices,
// spacing_x_mm, spacing_y_mm, thickness_mm (single value or one per slice),
// orientation, dtype (float32 or int16).

VoxelVolume load_volume(const std::filesystem::path& raw_path,
                        const std::filesystem::path& meta_path);
std::vector<VoxelVolume> load_study(const std::filesystem::path& study_dir);
void save_volume(const std::filesystem::path& dir, const std::string& stem,
                 const VoxelVolume& volume);

struct SequenceManifest {
  std::string study_id;
  Modality modality = Modality::CT;
  std::int64_t vision_tokens = 0;
  std::vector<std::string> files;  // relative to the study output dir
};

/// Writes {out_dir}/{study}/{seq:04}_{series}_{z:04}.png plus sequence.json
/// and returns the manifest that was written.
SequenceManifest write_sequence(const SliceSequence& sequence,
                                const std::string& study_id,
                                const std::filesystem::path& out_dir);

}  // namespace medeval::volgrid
