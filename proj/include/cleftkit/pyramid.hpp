#pragma once

#include <map>
#include <string>
#include <vector>

#include "cleftkit/volume.hpp"

namespace cleftkit {

namespace n5 {
class Container;
}

// Output cells are anchored at world coordinate 0: cell c covers
// [c * f, (c + 1) * f) on each axis. The output roi holds every cell that
// intersects v.roi(); partial cells average only in-bounds voxels.
Roi downscaled_roi(const Roi& r, const Coord& factors);

// Mean pooling. The voxel size is multiplied by the factors.
template <class T>
FloatVolume downscale(const Volume<T>& v, const Coord& factors) {
  for (auto f : factors) {
    if (f < 1) throw Error(ErrorCode::config, "downscale factors must be >= 1", to_string(factors));
  }
  const Roi out_roi = downscaled_roi(v.roi(), factors);
  const VoxelSize& vs = v.voxel_size();
  FloatVolume out(out_roi, VoxelSize(vs.z * double(factors[0]), vs.y * double(factors[1]), vs.x * double(factors[2])));
  const Coord in_end = v.roi().end();
  for (std::int64_t cz = 0; cz < out_roi.shape[0]; ++cz) {
    const auto z0 = std::max((out_roi.offset[0] + cz) * factors[0], v.roi().offset[0]);
    const auto z1 = std::min((out_roi.offset[0] + cz + 1) * factors[0], in_end[0]);
    for (std::int64_t cy = 0; cy < out_roi.shape[1]; ++cy) {
      const auto y0 = std::max((out_roi.offset[1] + cy) * factors[1], v.roi().offset[1]);
      const auto y1 = std::min((out_roi.offset[1] + cy + 1) * factors[1], in_end[1]);
      for (std::int64_t cx = 0; cx < out_roi.shape[2]; ++cx) {
        const auto x0 = std::max((out_roi.offset[2] + cx) * factors[2], v.roi().offset[2]);
        const auto x1 = std::min((out_roi.offset[2] + cx + 1) * factors[2], in_end[2]);
        double sum = 0.0;
        for (auto z = z0; z < z1; ++z)
          for (auto y = y0; y < y1; ++y)
            for (auto x = x0; x < x1; ++x) sum += static_cast<double>(v.at({z, y, x}));
        const double n = double(z1 - z0) * double(y1 - y0) * double(x1 - x0);
        out(cz, cy, cx) = static_cast<float>(sum / n);
      }
    }
  }
  return out;
}

// Most frequent value per cell; ties go to the smallest value.
template <class T>
Volume<T> downscale_majority(const Volume<T>& v, const Coord& factors) {
  for (auto f : factors) {
    if (f < 1) throw Error(ErrorCode::config, "downscale factors must be >= 1", to_string(factors));
  }
  const Roi out_roi = downscaled_roi(v.roi(), factors);
  const VoxelSize& vs = v.voxel_size();
  Volume<T> out(out_roi, VoxelSize(vs.z * double(factors[0]), vs.y * double(factors[1]), vs.x * double(factors[2])));
  const Coord in_end = v.roi().end();
  std::map<T, std::int64_t> counts;
  for (std::int64_t cz = 0; cz < out_roi.shape[0]; ++cz) {
    for (std::int64_t cy = 0; cy < out_roi.shape[1]; ++cy) {
      for (std::int64_t cx = 0; cx < out_roi.shape[2]; ++cx) {
        counts.clear();
        const Coord c{out_roi.offset[0] + cz, out_roi.offset[1] + cy, out_roi.offset[2] + cx};
        for (auto z = std::max(c[0] * factors[0], v.roi().offset[0]); z < std::min((c[0] + 1) * factors[0], in_end[0]); ++z)
          for (auto y = std::max(c[1] * factors[1], v.roi().offset[1]); y < std::min((c[1] + 1) * factors[1], in_end[1]); ++y)
            for (auto x = std::max(c[2] * factors[2], v.roi().offset[2]); x < std::min((c[2] + 1) * factors[2], in_end[2]); ++x)
              ++counts[v.at({z, y, x})];
        T best{};
        std::int64_t best_count = -1;
        for (const auto& [value, count] : counts) {
          if (count > best_count) {
            best = value;
            best_count = count;
          }
        }
        out(cz, cy, cx) = best;
      }
    }
  }
  return out;
}

// 1 where lo <= value <= hi.
template <class T>
LabelVolume build_mask(const Volume<T>& v, double lo, double hi) {
  LabelVolume out(v.roi(), v.voxel_size());
  auto in = v.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const auto x = static_cast<double>(in[i]);
    o[i] = (x >= lo && x <= hi) ? 1 : 0;
  }
  return out;
}

struct PyramidLevel {
  int index = 0;
  // Cumulative factors relative to level 0, (z, y, x).
  Coord factors{1, 1, 1};
  std::string dataset;
};

// Writes datasets s1, s2, ... next to `source` inside `container`, each
// downscaled from the previous level by the matching entry of
// `relative_factors`, and returns every level including level 0. Levels are
// stored as float32 with N5 "downsamplingFactors" and "resolution"
// attributes. The work runs block-parallel through the inference engine.
std::vector<PyramidLevel> build_pyramid(const n5::Container& container, const std::string& source,
                                        const std::vector<Coord>& relative_factors, int workers = 1,
                                        Coord chunk_size = {64, 64, 64});

}  // namespace cleftkit
