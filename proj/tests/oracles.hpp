#pragma once

// Independent test oracles. These deliberately use brute force instead of the
// library's algorithms so they can disagree with a buggy implementation.

#include <cstdint>
#include <string>
#include <vector>

#include "medeval/answers.hpp"
#include "medeval/slidegrid.hpp"

namespace medeval::test {

/// LCS length by enumerating every subsequence of `a` (|a| <= ~20) and
/// checking it against `b`.
inline std::size_t brute_lcs(const std::vector<std::string>& a,
                             const std::vector<std::string>& b) {
  std::size_t best = 0;
  const std::uint32_t masks = 1u << a.size();
  for (std::uint32_t mask = 0; mask < masks; ++mask) {
    const std::size_t len = static_cast<std::size_t>(__builtin_popcount(mask));
    if (len <= best) continue;
    std::size_t bi = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask & (1u << i))) continue;
      while (bi < b.size() && b[bi] != a[i]) ++bi;
      if (bi == b.size()) {
        ok = false;
      } else {
        ++bi;
      }
    }
    if (ok) best = len;
  }
  return best;
}

/// IoU by counting cell centers on an n x n raster.
inline double raster_iou(const BBox& a, const BBox& b, int n = 1000) {
  auto inside = [](const BBox& box, double y, double x) {
    return box.y0 <= y && y < box.y1 && box.x0 <= x && x < box.x1;
  };
  long ca = 0, cb = 0, ci = 0;
  for (int iy = 0; iy < n; ++iy) {
    const double y = (iy + 0.5) / n;
    for (int ix = 0; ix < n; ++ix) {
      const double x = (ix + 0.5) / n;
      const bool ina = inside(a, y, x);
      const bool inb = inside(b, y, x);
      ca += ina;
      cb += inb;
      ci += ina && inb;
    }
  }
  const long cu = ca + cb - ci;
  return cu > 0 ? static_cast<double>(ci) / cu : 0.0;
}

struct BruteClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// Metrics from first principles over (gold, pred) records.
inline BruteClassScores brute_class_scores(const std::vector<std::pair<bool, bool>>& records) {
  long tp = 0, fp = 0, fn = 0, correct = 0;
  for (const auto& [gold, pred] : records) {
    if (gold && pred) ++tp;
    if (!gold && pred) ++fp;
    if (gold && !pred) ++fn;
    if (gold == pred) ++correct;
  }
  BruteClassScores s;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  s.accuracy = records.empty() ? 0.0 : static_cast<double>(correct) / records.size();
  return s;
}

struct MaskOverlap {
  double tissue_covered = 0.0;    // fraction of the true rect marked tissue
  double background_leak = 0.0;   // fraction of the background marked tissue
};

/// Pixel count of a mask against a known ground-truth rectangle.
inline MaskOverlap mask_vs_rect(const slidegrid::TissueMask& mask, int rx, int ry, int rw,
                                int rh) {
  long in_rect = 0, in_rect_marked = 0, out_rect = 0, out_rect_marked = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const bool truth = x >= rx && x < rx + rw && y >= ry && y < ry + rh;
      const bool marked = mask.at(x, y);
      if (truth) {
        ++in_rect;
        if (marked) ++in_rect_marked;
      } else {
        ++out_rect;
        if (marked) ++out_rect_marked;
      }
    }
  }
  MaskOverlap o;
  o.tissue_covered = in_rect > 0 ? static_cast<double>(in_rect_marked) / in_rect : 0.0;
  o.background_leak = out_rect > 0 ? static_cast<double>(out_rect_marked) / out_rect : 0.0;
  return o;
}

}  // namespace medeval::test
