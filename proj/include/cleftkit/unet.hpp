#pragma once

// Shape arithmetic of valid-convolution U-Nets.
//
// An encoder level applies its convolutions and then pools by `down`; the
// last level only convolves. The decoder mirrors the encoder: for every level
// but the last, from the bottom up, it upsamples by that level's `down` and
// applies the level's decoder convolutions (the encoder ones unless
// overridden). Every convolution shrinks each axis by (k - 1).

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cleftkit/volume.hpp"

namespace cleftkit {

struct UnetLevel {
  std::vector<Coord> convs;
  std::optional<Coord> down;  // absent on the last level
  std::optional<std::vector<Coord>> decoder_convs;
  int features = 0;  // carried along, unused by the geometry
};

struct ArchSpec {
  std::string name;
  std::vector<UnetLevel> levels;
  // Optional presets carried by config files.
  std::optional<Coord> output_shape;
  std::optional<Coord> production_output_shape;

  void validate() const;
  const std::vector<Coord>& decoder_convs(std::size_t level) const;

  static ArchSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

ArchSpec load_arch(const std::filesystem::path& path);
// Bundled presets: "dtu1-like", "dtu2-like".
ArchSpec arch_preset(const std::string& name);
std::vector<std::string> arch_preset_names();

// Throws ErrorCode::shape naming the layer and axis when an intermediate
// shape drops below 1 or is not divisible by a pooling factor.
Coord valid_output_shape(const ArchSpec& a, const Coord& input_shape);

// Smallest admissible input whose valid output is >= desired per axis.
Coord required_input_shape(const ArchSpec& a, const Coord& desired_output_shape);

// (required_input_shape - output_shape) / 2; throws
// ErrorCode::asymmetric_context when a difference is odd.
Coord context_per_side(const ArchSpec& a, const Coord& output_shape);

struct FovLayer {
  std::string name;  // e.g. "enc0.conv1", "enc0.pool", "bottom.conv0", "dec1.up"
  Coord voxel_fov;
  std::array<double, 3> physical_nm;
  double isotropy = 1.0;  // max(physical) / min(physical)
};

struct FovReport {
  std::vector<FovLayer> layers;
};

// Receptive field of one unit after each layer, in input voxels and in nm.
// A convolution adds (k - 1) * step, pooling adds (f - 1) * step and then
// multiplies the step, upsampling divides the step.
FovReport physical_fov(const ArchSpec& a, const VoxelSize& voxel_size);

}  // namespace cleftkit
