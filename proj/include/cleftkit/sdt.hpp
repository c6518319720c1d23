#pragma once

#include "cleftkit/volume.hpp"

namespace cleftkit {

struct SdtParams {
  double scale_nm = 50.0;
  VoxelSize voxel_size{};
};

// Squared physical distance (nm^2) from every voxel center to the nearest
// nonzero voxel center of `sites`, computed exactly with separable 1D
// lower-envelope passes. Voxels are +inf when `sites` is empty.
Volume<double> squared_distance_to_sites(const LabelVolume& sites, const VoxelSize& voxel_size);

// Double-precision signed distance; sedt() narrows this to f32.
Volume<double> signed_distance(const LabelVolume& labels, const VoxelSize& voxel_size);

// Signed Euclidean distance transform: +distance to the nearest background
// voxel inside the foreground, -distance to the nearest foreground voxel
// outside. Throws ErrorCode::empty_class unless both classes are present.
FloatVolume sedt(const LabelVolume& labels, const VoxelSize& voxel_size);

// tanh(value / scale), kept strictly inside (-1, 1).
FloatVolume stdt(const FloatVolume& sedt_volume, double scale_nm);

// 1 where value > t.
LabelVolume threshold_to_labels(const FloatVolume& v, float t = 0.0f);

}  // namespace cleftkit
