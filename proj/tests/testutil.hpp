#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "medeval/image.hpp"
#include "medeval/slidegrid.hpp"
#include "medeval/volgrid.hpp"

namespace medeval::test {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("medeval_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline volgrid::VoxelVolume make_volume(
    const std::string& series, volgrid::Modality modality, int w, int h, int n,
    const std::function<float(int, int, int)>& value,
    volgrid::Orientation orientation = volgrid::Orientation::Axial, double thickness = 1.0) {
  volgrid::VoxelVolume v;
  v.series_id = series;
  v.modality = modality;
  v.width = w;
  v.height = h;
  v.n_slices = n;
  v.slice_thickness_mm.assign(n, thickness);
  v.orientation = orientation;
  v.voxels.resize(static_cast<std::size_t>(w) * h * n);
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        v.voxels[(static_cast<std::size_t>(z) * h + y) * w + x] = value(x, y, z);
      }
    }
  }
  return v;
}

inline volgrid::VoxelVolume make_ct(const std::string& series, int w, int h, int n,
                                    float fill = 0.0f) {
  return make_volume(series, volgrid::Modality::CT, w, h, n,
                     [fill](int, int, int) { return fill; });
}

inline RgbImage solid_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t* p = img.px(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
  return img;
}

inline void fill_rect(RgbImage& img, int x0, int y0, int w, int h, std::uint8_t r,
                      std::uint8_t g, std::uint8_t b) {
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      std::uint8_t* p = img.px(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
}

// H&E-ish pink that passes the saturation floor and stays under the value
// ceiling; white glass background fails the saturation floor.
inline constexpr std::uint8_t kTissueR = 222, kTissueG = 142, kTissueB = 170;

/// White slide with one tissue rectangle, single 5x level.
inline slidegrid::SlidePyramid make_tissue_slide(const std::string& id, int w, int h, int rx,
                                                 int ry, int rw, int rh,
                                                 const std::string& caption = "colon biopsy") {
  RgbImage level = solid_image(w, h, 255, 255, 255);
  fill_rect(level, rx, ry, rw, rh, kTissueR, kTissueG, kTissueB);
  std::vector<slidegrid::PyramidLevel> levels;
  levels.push_back(slidegrid::PyramidLevel{5.0, std::move(level)});
  return slidegrid::SlidePyramid(id, 5.0, std::move(levels), caption);
}

}  // namespace medeval::test
