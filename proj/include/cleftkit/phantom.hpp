#pragma once

#include <cstdint>

#include "cleftkit/volume.hpp"

namespace cleftkit {

// Synthetic ssTEM-like volume: a ball of "sample" tissue filling
// `sample_fraction` of the volume on dark background, with thin disc-shaped
// clefts inside the tissue.
struct Phantom {
  FloatVolume raw;       // intensities in [0, 1]
  LabelVolume clefts;    // binary cleft labels
  LabelVolume sample;    // 1 inside the tissue ball
};

struct PhantomOptions {
  double sample_fraction = 0.2;
  int clefts = 12;
  double background = 0.05;
  double tissue = 0.6;
  double cleft = 0.3;
  double noise = 0.05;
};

Phantom make_phantom(const Coord& shape, std::uint64_t seed, const VoxelSize& voxel_size = {},
                     const PhantomOptions& options = {});

}  // namespace cleftkit
