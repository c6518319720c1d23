#pragma once

// Bundled predictors. None of them is a trained network; they exist so that
// every property of the blockwise pipeline can be exercised.

#include <chrono>
#include <memory>

#include "cleftkit/inference.hpp"

namespace cleftkit {

// Crops the input to the output roi. Input and output types are `type`.
class IdentityPredictor final : public Predictor {
 public:
  explicit IdentityPredictor(Coord context = {0, 0, 0}, DataType type = DataType::f32)
      : context_(context), type_(type) {}
  PredictorContract contract() const override { return {context_, type_, type_, 1}; }
  std::vector<AnyVolume> predict(const AnyVolume& input, const Roi& output_roi) const override;

 private:
  Coord context_;
  DataType type_;
};

// Separable stencil over f32 input with per-axis half widths equal to the
// context. Every output voxel is accumulated in the same order whatever the
// block it falls in, so results are bit-identical across block shapes.
class StencilPredictor final : public Predictor {
 public:
  // Uniform (box) weights.
  static StencilPredictor box(Coord radius);
  // Truncated Gaussian with sigma in voxels; radius ceil(3 sigma).
  static StencilPredictor gaussian(std::array<double, 3> sigma_voxels);

  PredictorContract contract() const override { return {radius_, DataType::f32, DataType::f32, 1}; }
  std::vector<AnyVolume> predict(const AnyVolume& input, const Roi& output_roi) const override;

  // Whole-volume application with zero padding, independent of the engine.
  FloatVolume apply(const FloatVolume& v) const;

 private:
  StencilPredictor(Coord radius, std::array<std::vector<float>, 3> taps) : radius_(radius), taps_(std::move(taps)) {}

  Coord radius_;
  std::array<std::vector<float>, 3> taps_;
};

// Ignores its input and returns the STDT of a colocated binary ground-truth
// source, computed over the input roi (so distances are exact up to the
// context). Used for end-to-end metric checks.
class StdtOraclePredictor final : public Predictor {
 public:
  StdtOraclePredictor(std::shared_ptr<const BlockSource> ground_truth, Coord context, VoxelSize voxel_size,
                      double scale_nm = 50.0, DataType input_type = DataType::u8)
      : truth_(std::move(ground_truth)),
        context_(context),
        voxel_size_(voxel_size),
        scale_nm_(scale_nm),
        input_type_(input_type) {}
  PredictorContract contract() const override { return {context_, input_type_, DataType::f32, 1}; }
  std::vector<AnyVolume> predict(const AnyVolume& input, const Roi& output_roi) const override;

 private:
  std::shared_ptr<const BlockSource> truth_;
  Coord context_;
  VoxelSize voxel_size_;
  double scale_nm_;
  DataType input_type_;
};

// Sleeps for a fixed time and then behaves like IdentityPredictor; models a
// GPU with constant per-block latency.
class FixedDelayPredictor final : public Predictor {
 public:
  FixedDelayPredictor(std::chrono::microseconds delay, DataType type = DataType::f32)
      : delay_(delay), type_(type) {}
  PredictorContract contract() const override { return {{0, 0, 0}, type_, type_, 1}; }
  std::vector<AnyVolume> predict(const AnyVolume& input, const Roi& output_roi) const override;

 private:
  std::chrono::microseconds delay_;
  DataType type_;
};

std::unique_ptr<Predictor> make_predictor(const std::string& name, Coord context, DataType type);

}  // namespace cleftkit
