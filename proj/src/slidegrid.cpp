#include "medeval/slidegrid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medeval/common.hpp"
#include "medeval/rng.hpp"

namespace medeval::slidegrid {

namespace {

std::string zero_pad4(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", v);
  return buf;
}

std::string mag_to_string(double mag) {
  if (mag == std::floor(mag)) return std::to_string(static_cast<long long>(mag));
  std::ostringstream out;
  out << mag;
  return out.str();
}

}  // namespace

SlidePyramid::SlidePyramid(std::string slide_id, double base_magnification,
                           std::vector<PyramidLevel> levels, std::string caption_label)
    : slide_id_(std::move(slide_id)),
      base_magnification_(base_magnification),
      caption_label_(std::move(caption_label)),
      levels_(std::move(levels)) {
  if (levels_.empty()) throw ValidationError("slide " + slide_id_ + ": no pyramid levels");
  std::sort(levels_.begin(), levels_.end(), [](const PyramidLevel& a, const PyramidLevel& b) {
    return a.magnification > b.magnification;
  });
  for (const PyramidLevel& level : levels_) {
    if (!(level.magnification > 0.0)) {
      throw ValidationError("slide " + slide_id_ + ": non-positive magnification");
    }
    if (level.image.empty()) {
      throw ValidationError("slide " + slide_id_ + ": zero-area level at " +
                            mag_to_string(level.magnification) + "x");
    }
  }
  // Dims must track the magnification ratio against the top level within 1 px.
  const PyramidLevel& top = levels_.front();
  for (const PyramidLevel& level : levels_) {
    const double ratio = level.magnification / top.magnification;
    const double want_w = top.image.width * ratio;
    const double want_h = top.image.height * ratio;
    if (std::abs(level.image.width - want_w) > 1.0 + 1e-9 ||
        std::abs(level.image.height - want_h) > 1.0 + 1e-9) {
      throw ValidationError("slide " + slide_id_ + ": level " +
                            mag_to_string(level.magnification) +
                            "x dims inconsistent with magnification ratio");
    }
  }
}

const RgbImage& SlidePyramid::level_image(double magnification) const {
  auto find = [&](const std::vector<PyramidLevel>& pool) -> const RgbImage* {
    for (const PyramidLevel& level : pool) {
      if (std::abs(level.magnification - magnification) < 1e-9) return &level.image;
    }
    return nullptr;
  };
  if (const RgbImage* img = find(levels_)) return *img;
  if (const RgbImage* img = find(synthesized_)) return *img;

  // Prefer downscaling the smallest stored level that is still finer than the
  // target; upscale from the base level only when nothing finer exists.
  const PyramidLevel* source = nullptr;
  for (const PyramidLevel& level : levels_) {
    if (level.magnification >= magnification - 1e-9) source = &level;
  }
  if (!source) source = &levels_.front();

  const double ratio = magnification / source->magnification;
  const int w = std::max(1, static_cast<int>(std::lround(source->image.width * ratio)));
  const int h = std::max(1, static_cast<int>(std::lround(source->image.height * ratio)));
  PyramidLevel synth;
  synth.magnification = magnification;
  synth.image = ratio <= 1.0 ? resize_area(source->image, w, h)
                             : resize_bilinear(source->image, w, h);
  synthesized_.push_back(std::move(synth));
  return synthesized_.back().image;
}

RgbImage SlidePyramid::read_region(double magnification, int x, int y, int w, int h) const {
  if (w <= 0 || h <= 0) throw ValidationError("read_region: non-positive size");
  const RgbImage& level = level_image(magnification);
  RgbImage out(w, h);  // zero-initialized; out-of-bounds stays black
  const int x0 = std::max(0, x);
  const int y0 = std::max(0, y);
  const int x1 = std::min(level.width, x + w);
  const int y1 = std::min(level.height, y + h);
  for (int sy = y0; sy < y1; ++sy) {
    for (int sx = x0; sx < x1; ++sx) {
      const std::uint8_t* s = level.px(sx, sy);
      std::uint8_t* d = out.px(sx - x, sy - y);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  }
  return out;
}

SlidePyramid load_slide(const std::filesystem::path& slide_dir) {
  const std::filesystem::path manifest_path = slide_dir / "slide.json";
  nlohmann::json j = nlohmann::json::parse(read_text_file(manifest_path));
  std::vector<PyramidLevel> levels;
  for (const auto& entry : j.at("levels")) {
    PyramidLevel level;
    level.magnification = entry.at("magnification").get<double>();
    level.image = load_png(slide_dir / entry.at("file").get<std::string>());
    levels.push_back(std::move(level));
  }
  return SlidePyramid(j.at("slide_id").get<std::string>(),
                      j.at("base_magnification").get<double>(), std::move(levels),
                      j.value("caption_label", std::string{}));
}

void save_slide(const std::filesystem::path& slide_dir, const SlidePyramid& slide) {
  std::filesystem::create_directories(slide_dir);
  nlohmann::json levels = nlohmann::json::array();
  for (const PyramidLevel& level : slide.levels()) {
    const std::string file = mag_to_string(level.magnification) + "x.png";
    save_png(slide_dir / file, level.image);
    levels.push_back({{"magnification", level.magnification}, {"file", file}});
  }
  nlohmann::json j{{"slide_id", slide.slide_id()},
                   {"base_magnification", slide.base_magnification()},
                   {"caption_label", slide.caption_label()},
                   {"levels", levels}};
  write_text_file(slide_dir / "slide.json", j.dump(2) + "\n");
}

std::size_t TissueMask::count() const {
  return static_cast<std::size_t>(std::count(grid.begin(), grid.end(), std::uint8_t{1}));
}

HsvPixel rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  HsvPixel hsv;
  hsv.v = mx;
  hsv.s = mx > 0.0 ? d / mx : 0.0;
  if (d > 0.0) {
    if (mx == r) {
      hsv.h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      hsv.h = 60.0 * ((b - r) / d + 2.0);
    } else {
      hsv.h = 60.0 * ((r - g) / d + 4.0);
    }
    if (hsv.h < 0.0) hsv.h += 360.0;
  }
  return hsv;
}

namespace {

TissueMask morph(const TissueMask& mask, int radius, bool dilating) {
  TissueMask out;
  out.width = mask.width;
  out.height = mask.height;
  out.grid.assign(mask.grid.size(), 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool acc = !dilating;
      for (int dy = -radius; dy <= radius && (dilating ? !acc : acc); ++dy) {
        for (int dx = -radius; dx <= radius && (dilating ? !acc : acc); ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          const bool v = nx >= 0 && ny >= 0 && nx < mask.width && ny < mask.height &&
                         mask.at(nx, ny);
          if (dilating) {
            acc = acc || v;
          } else {
            acc = acc && v;
          }
        }
      }
      out.set(x, y, acc);
    }
  }
  return out;
}

}  // namespace

TissueMask dilate(const TissueMask& mask, int radius) { return morph(mask, radius, true); }
TissueMask erode(const TissueMask& mask, int radius) { return morph(mask, radius, false); }

TissueMask morphological_close(const TissueMask& mask, int radius) {
  return erode(dilate(mask, radius), radius);
}

TissueMask morphological_open(const TissueMask& mask, int radius) {
  return dilate(erode(mask, radius), radius);
}

TissueMask drop_small_components(const TissueMask& mask, int min_cells) {
  TissueMask out = mask;
  std::vector<std::int32_t> label(mask.grid.size(), 0);
  std::int32_t next = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.grid[i] || label[i] != 0) continue;
      ++next;
      std::deque<std::pair<int, int>> frontier{{x, y}};
      label[i] = next;
      std::vector<std::size_t> cells{i};
      while (!frontier.empty()) {
        const auto [cx, cy] = frontier.front();
        frontier.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * mask.width + nx;
            if (!mask.grid[ni] || label[ni] != 0) continue;
            label[ni] = next;
            cells.push_back(ni);
            frontier.emplace_back(nx, ny);
          }
        }
      }
      if (cells.size() < static_cast<std::size_t>(min_cells)) {
        for (std::size_t c : cells) out.grid[c] = 0;
      }
    }
  }
  return out;
}

MaskStages tissue_mask_stages(const SlidePyramid& slide, const MaskParams& params) {
  const RgbImage& low = slide.level_image(kMaskMagnification);
  if (low.empty()) throw ValidationError("tissue_mask: zero-area slide");

  MaskStages stages;
  stages.candidates.width = low.width;
  stages.candidates.height = low.height;
  stages.candidates.grid.assign(static_cast<std::size_t>(low.width) * low.height, 0);
  for (int y = 0; y < low.height; ++y) {
    for (int x = 0; x < low.width; ++x) {
      const std::uint8_t* p = low.px(x, y);
      const HsvPixel hsv = rgb_to_hsv(p[0], p[1], p[2]);
      const bool tissue = hsv.s >= params.sat_min && hsv.v >= params.val_min &&
                          hsv.v <= params.val_max;
      stages.candidates.set(x, y, tissue);
    }
  }
  stages.cleaned = morphological_open(morphological_close(stages.candidates, params.morph_radius),
                                      params.morph_radius);
  stages.final = drop_small_components(stages.cleaned, params.min_component_cells);
  return stages;
}

TissueMask tissue_mask(const SlidePyramid& slide, const MaskParams& params) {
  return tissue_mask_stages(slide, params).final;
}

double choose_magnification(const MagnificationDistribution& dist, std::uint64_t rng_seed) {
  const double sum = dist.p5 + dist.p10 + dist.p20;
  if (dist.p5 < 0.0 || dist.p10 < 0.0 || dist.p20 < 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("magnification probabilities must be nonnegative and sum to 1");
  }
  std::mt19937_64 eng = rng::make_engine(rng_seed);
  const double u = rng::unit_double(eng);
  if (u < dist.p5) return 5.0;
  if (u < dist.p5 + dist.p10) return 10.0;
  return 20.0;
}

std::vector<GridCell> grid_candidates(const TissueMask& mask, const SlidePyramid& slide,
                                      double target_mag, double min_tissue_fraction) {
  const RgbImage& level = slide.level_image(target_mag);
  const int rows = (level.height + kPatchEdge - 1) / kPatchEdge;
  const int cols = (level.width + kPatchEdge - 1) / kPatchEdge;

  // One grid cell covers patch_size * (5x / target) pixels of the 5x mask.
  const double cell_px = kPatchEdge * kMaskMagnification / target_mag;

  std::vector<GridCell> candidates;
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < cols; ++col) {
      const double x_lo = col * cell_px;
      const double x_hi = x_lo + cell_px;
      const double y_lo = row * cell_px;
      const double y_hi = y_lo + cell_px;
      const int ix0 = static_cast<int>(std::floor(x_lo));
      const int iy0 = static_cast<int>(std::floor(y_lo));
      const int ix1 = std::min(static_cast<int>(std::ceil(x_hi)), mask.width);
      const int iy1 = std::min(static_cast<int>(std::ceil(y_hi)), mask.height);
      // Mean-pool the binary mask over the in-bounds footprint. The fraction
      // denominator excludes the zero-padded margin of edge cells so tissue
      // at the slide boundary still gets patched.
      double tissue = 0.0;
      for (int y = std::max(0, iy0); y < iy1; ++y) {
        const double hy = std::min<double>(y + 1, y_hi) - std::max<double>(y, y_lo);
        for (int x = std::max(0, ix0); x < ix1; ++x) {
          if (!mask.at(x, y)) continue;
          const double hx = std::min<double>(x + 1, x_hi) - std::max<double>(x, x_lo);
          tissue += hx * hy;
        }
      }
      const double in_bounds = (std::min<double>(x_hi, mask.width) - x_lo) *
                               (std::min<double>(y_hi, mask.height) - y_lo);
      if (in_bounds <= 0.0) continue;
      if (tissue / in_bounds >= min_tissue_fraction) candidates.push_back(GridCell{row, col});
    }
  }
  return candidates;
}

PatchSet extract_patches(const SlidePyramid& slide, const std::vector<GridCell>& candidates,
                         double target_mag) {
  if (candidates.empty()) throw ValidationError("extract_patches: no candidate cells");
  PatchSet set;
  set.slide_id = slide.slide_id();
  set.magnification = target_mag;
  set.caption_label = slide.caption_label();
  for (const GridCell& cell : candidates) {
    try {
      const RgbImage region = slide.read_region(target_mag, cell.col * kPatchEdge,
                                                cell.row * kPatchEdge, kPatchEdge, kPatchEdge);
      set.patches.push_back(Patch{cell.row, cell.col, encode_png(region)});
    } catch (const std::exception& e) {
      set.diagnostics.push_back("patch (" + std::to_string(cell.row) + ", " +
                                std::to_string(cell.col) + ") skipped: " + e.what());
    }
  }
  return set;
}

PatchSet subsample_patches(PatchSet patchset, int cap, std::uint64_t rng_seed) {
  if (cap < 1) throw ValidationError("subsample_patches: cap must be >= 1");
  if (patchset.patches.size() <= static_cast<std::size_t>(cap)) return patchset;
  std::mt19937_64 eng = rng::make_engine(rng_seed);
  const std::vector<std::size_t> keep =
      rng::sample_without_replacement(patchset.patches.size(), static_cast<std::size_t>(cap), eng);
  std::vector<Patch> kept;
  kept.reserve(keep.size());
  for (std::size_t i : keep) kept.push_back(std::move(patchset.patches[i]));
  patchset.patches = std::move(kept);
  patchset.cap = cap;
  return patchset;
}

PatchManifest write_patchset(const PatchSet& patchset, std::uint64_t seed,
                             const std::filesystem::path& out_dir) {
  const std::string mag_dir = mag_to_string(patchset.magnification) + "x";
  const std::filesystem::path dir = out_dir / patchset.slide_id / mag_dir;
  std::filesystem::create_directories(dir);

  PatchManifest manifest;
  manifest.slide_id = patchset.slide_id;
  manifest.magnification = patchset.magnification;
  manifest.seed = seed;
  manifest.caption_label = patchset.caption_label;

  // File refs are relative to the slide directory where patches.json lives.
  nlohmann::json files = nlohmann::json::array();
  for (const Patch& patch : patchset.patches) {
    const std::string rel = mag_dir + "/" + zero_pad4(patch.grid_row) + "_" +
                            zero_pad4(patch.grid_col) + ".png";
    write_binary_file(out_dir / patchset.slide_id / rel, patch.png);
    manifest.files.push_back(rel);
    files.push_back({{"row", patch.grid_row}, {"col", patch.grid_col}, {"file", rel}});
  }

  nlohmann::json j{{"slide_id", patchset.slide_id},
                   {"magnification", patchset.magnification},
                   {"seed", seed},
                   {"caption_label", patchset.caption_label},
                   {"patches", files}};
  write_text_file(out_dir / patchset.slide_id / "patches.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace medeval::slidegrid
