#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medeval/image.hpp"

namespace medeval::slidegrid {

inline constexpr int kPatchCap = 126;
inline constexpr int kPatchEdge = 896;
inline constexpr double kMaskMagnification = 5.0;

/// Thresholds for the staged tissue mask; all overridable via config.
struct MaskParams {
  double sat_min = 0.07;
  double val_min = 0.05;
  double val_max = 0.98;
  int morph_radius = 1;          // 3-cell square structuring element
  int min_component_cells = 64;  // stage 3 small-component drop
};

struct MagnificationDistribution {
  double p5 = 0.34;
  double p10 = 0.33;
  double p20 = 0.33;
};

struct PyramidLevel {
  double magnification = 0.0;
  RgbImage image;
};

/// Multi-level slide: levels sorted by magnification descending, dims
/// consistent with the magnification ratio within one pixel.
class SlidePyramid {
 public:
  SlidePyramid(std::string slide_id, double base_magnification,
               std::vector<PyramidLevel> levels, std::string caption_label = {});

  const std::string& slide_id() const { return slide_id_; }
  double base_magnification() const { return base_magnification_; }
  const std::string& caption_label() const { return caption_label_; }
  const std::vector<PyramidLevel>& levels() const { return levels_; }

  /// Level at `magnification`, synthesizing one by rescaling the nearest
  /// stored level when it is not present. Synthesized levels are cached.
  const RgbImage& level_image(double magnification) const;

  /// Region read with zero padding outside the level bounds.
  RgbImage read_region(double magnification, int x, int y, int w, int h) const;

 private:
  std::string slide_id_;
  double base_magnification_ = 0.0;
  std::string caption_label_;
  std::vector<PyramidLevel> levels_;
  mutable std::vector<PyramidLevel> synthesized_;
};

/// Directory container: slide.json naming per-level PNG files.
SlidePyramid load_slide(const std::filesystem::path& slide_dir);
void save_slide(const std::filesystem::path& slide_dir, const SlidePyramid& slide);

struct TissueMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> grid;  // 0 or 1, row-major, at 5x dims

  bool at(int x, int y) const { return grid[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) {
    grid[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t count() const;
};

struct HsvPixel {
  double h = 0.0;  // [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Binary morphology on masks; pixels outside the grid count as background.
TissueMask dilate(const TissueMask& mask, int radius);
TissueMask erode(const TissueMask& mask, int radius);
TissueMask morphological_close(const TissueMask& mask, int radius);
TissueMask morphological_open(const TissueMask& mask, int radius);

/// Removes 8-connected components smaller than `min_cells`.
TissueMask drop_small_components(const TissueMask& mask, int min_cells);

struct MaskStages {
  TissueMask candidates;  // stage 1: HSV thresholds
  TissueMask cleaned;     // stage 2: close then open
  TissueMask final;       // stage 3: small components dropped
};

/// Staged HSV tissue segmentation at 5x. Throws on a zero-area slide.
MaskStages tissue_mask_stages(const SlidePyramid& slide, const MaskParams& params = {});
TissueMask tissue_mask(const SlidePyramid& slide, const MaskParams& params = {});

/// One seeded draw from {5, 10, 20} with the configured probabilities.
double choose_magnification(const MagnificationDistribution& dist, std::uint64_t rng_seed);

struct GridCell {
  int row = 0;
  int col = 0;
};

/// Grid cells (row-major) whose tissue fraction at the target extraction
/// stride is at least `min_tissue_fraction`. The grid is anchored at the
/// target level origin with stride = patch size = 896 px.
std::vector<GridCell> grid_candidates(const TissueMask& mask, const SlidePyramid& slide,
                                      double target_mag, double min_tissue_fraction = 0.10);

struct Patch {
  int grid_row = 0;
  int grid_col = 0;
  std::vector<std::uint8_t> png;  // 896x896 RGB
};

struct PatchSet {
  std::string slide_id;
  double magnification = 0.0;
  std::string caption_label;
  int cap = kPatchCap;
  std::vector<Patch> patches;          // row-major extraction order
  std::vector<std::string> diagnostics;  // per-patch read failures
};

/// Reads each candidate cell at the target magnification (edges zero-padded
/// to the full 896x896) and encodes RGB PNG bytes.
PatchSet extract_patches(const SlidePyramid& slide, const std::vector<GridCell>& candidates,
                         double target_mag);

/// Uniform subsample without replacement down to `cap`, keeping the original
/// spatial order of the kept patches. Identity when already under the cap.
PatchSet subsample_patches(PatchSet patchset, int cap, std::uint64_t rng_seed);

struct PatchManifest {
  std::string slide_id;
  double magnification = 0.0;
  std::uint64_t seed = 0;
  std::string caption_label;
  std::vector<std::string> files;  // relative to out_dir, row-major order
};

/// Writes {out_dir}/{slide_id}/{mag}x/{row:04}_{col:04}.png plus patches.json.
PatchManifest write_patchset(const PatchSet& patchset, std::uint64_t seed,
                             const std::filesystem::path& out_dir);

}  // namespace medeval::slidegrid
