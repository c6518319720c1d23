#pragma once

#include <array>
#include <cstdint>

#include "cleftkit/volume.hpp"

namespace cleftkit {

// Synaptic cleft detection score. Distances are in nm, voxel center to voxel
// center.
struct CleftScore {
  double fpd_nm = 0.0;  // mean distance of predicted positives to the nearest true positive
  double fnd_nm = 0.0;  // mean distance of true positives to the nearest predicted positive
  double cremi_score_nm = 0.0;  // (fpd + fnd) / 2
  std::int64_t n_pred_pos = 0;
  std::int64_t n_true_pos = 0;
  // Set when exactly one side has positives: the other side's distances are
  // measured against a label that does not exist and come out +inf.
  bool unmatched = false;
};

// Scores binary `pred` against binary `truth` (nonzero = positive). Voxels
// that are nonzero in `ignore` are dropped from both positive sets. An empty
// positive set contributes 0 for its own term.
CleftScore cleft_score(const LabelVolume& pred, const LabelVolume& truth, const VoxelSize& voxel_size,
                       const LabelVolume* ignore = nullptr);

// Truncated (4 sigma), unit-sum Gaussian taps for one axis.
std::vector<double> gaussian_kernel(double sigma_voxels);

// Simulated fluorescence density: separable Gaussian blur with per-axis
// sigma in nm (zero padding at the border), then mean downsampling to
// `output_voxel_size`, which must be an integer multiple of the input voxel
// size on every axis.
FloatVolume psf_density(const FloatVolume& pred, const std::array<double, 3>& sigma_nm,
                        const VoxelSize& output_voxel_size);

}  // namespace cleftkit
