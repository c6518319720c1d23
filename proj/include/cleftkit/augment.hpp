#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>

#include "json.hpp"

#include "cleftkit/volume.hpp"

namespace cleftkit {

// Seeded generator whose output is identical on every platform: the
// distributions are computed here from raw mt19937_64 words instead of
// going through <random>'s implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n), unbiased.
  std::int64_t uniform_int(std::int64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double sigma = 1.0);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct AugmentConfig {
  double transpose_xy = 0.5;
  double intensity_scale_min = 0.9;
  double intensity_scale_max = 1.1;
  double intensity_shift_min = -0.1;
  double intensity_shift_max = 0.1;
  double elastic_control_spacing = 10.0;  // voxels, in-plane
  double elastic_jitter_sigma = 1.0;      // voxels
  double elastic_rotation_max = 0.0;      // radians, uniform in [-max, max]
  double missing_section = 0.05;
  double noisy_section = 0.05;
  double noise_sigma = 0.1;

  void validate() const;
  static AugmentConfig none();
  static AugmentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// In-plane displacement field from a regular (y, x) grid of control point
// offsets, bilinearly interpolated between control points (and clamped to
// the grid outside it), plus an optional rotation about `center`.
class ElasticField {
 public:
  ElasticField(double origin_y, double origin_x, double spacing, std::int64_t rows, std::int64_t cols);

  // Control grid covering the (y, x) extent of `roi` with Gaussian offsets.
  static ElasticField random(const Roi& roi, double spacing, double jitter_sigma, double rotation_max, Rng& rng);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  void set_offset(std::int64_t row, std::int64_t col, double dy, double dx);
  void set_rotation(double angle, double center_y, double center_x);

  // Displacement (dy, dx) at world position (y, x).
  std::array<double, 2> displacement(double y, double x) const;
  bool is_identity() const;

 private:
  double origin_y_, origin_x_, spacing_;
  std::int64_t rows_, cols_;
  std::vector<double> dy_, dx_;
  double angle_ = 0.0, center_y_ = 0.0, center_x_ = 0.0;
};

enum class Interpolation { nearest, linear };

// Output voxel p takes the input value at p + displacement(p), section by
// section (z is never displaced). Samples outside the input are clamped to
// its border.
template <class T>
Volume<T> warp(const Volume<T>& v, const ElasticField& field, Interpolation interp);

// Random field over v.roi() with no rotation; linear interpolation for
// floating point volumes, nearest neighbor for labels.
template <class T>
Volume<T> apply_elastic(const Volume<T>& v, double control_spacing, double jitter_sigma, Rng& rng) {
  if (control_spacing < 1) throw Error(ErrorCode::config, "control spacing must be >= 1");
  const auto field = ElasticField::random(v.roi(), control_spacing, jitter_sigma, 0.0, rng);
  return warp(v, field, std::is_floating_point_v<T> ? Interpolation::linear : Interpolation::nearest);
}

// Swaps y and x within the volume's own frame; needs shape[1] == shape[2].
template <class T>
Volume<T> transpose_xy(const Volume<T>& v) {
  const Coord s = v.shape();
  if (s[1] != s[2]) throw Error(ErrorCode::shape, "transpose needs a square in-plane shape", to_string(s));
  Volume<T> out(v.roi(), v.voxel_size());
  for (std::int64_t z = 0; z < s[0]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[2]; ++x) out(z, x, y) = v(z, y, x);
  return out;
}

// raw * scale + shift, clamped to [0, 1].
FloatVolume apply_intensity(const FloatVolume& v, double scale, double shift);

// Each z-section is zeroed with probability missing_p, otherwise receives
// additive Gaussian noise with probability noisy_p. Output clamped to [0, 1].
FloatVolume apply_section_artifacts(const FloatVolume& v, double missing_p, double noisy_p, double noise_sigma,
                                    Rng& rng);

// Positive voxels get N / (2P), negative ones N / (2(N - P)); uniform 1 when
// only one class is present.
FloatVolume class_balance_weights(const LabelVolume& labels);

// sum(w (pred - target)^2) / sum(w).
double balanced_l2_loss(const FloatVolume& pred, const FloatVolume& target, const FloatVolume& weights);
// Unweighted L2 (the auxiliary boundary channel).
double l2_loss(const FloatVolume& pred, const FloatVolume& target);
// Both terms weighed equally.
inline double combined_loss(double cleft_term, double aux_term) { return (cleft_term + aux_term) / 2.0; }

// STDT regression target of `labels`; saturated at the open-interval limits
// when only one class is present.
FloatVolume stdt_target(const LabelVolume& labels, const VoxelSize& voxel_size, double scale_nm);

struct Batch {
  FloatVolume raw;
  LabelVolume labels;
  std::optional<LabelVolume> aux_labels;
  std::uint64_t rng_seed = 0;
  int draws = 0;  // random rois drawn, including rejected ones
};

// Draws training batches from in-memory source volumes. `raw` is expected
// in [0, 1]. The labels roi of a batch has `request_shape`; its raw roi is
// grown by `context`.
class BatchSampler {
 public:
  static constexpr double kRejectEmpty = 0.95;
  static constexpr int kDefaultMaxDraws = 1000;

  BatchSampler(std::shared_ptr<const FloatVolume> raw, std::shared_ptr<const LabelVolume> labels,
               std::shared_ptr<const LabelVolume> aux_labels, Coord request_shape, Coord context,
               AugmentConfig config);

  // Every labels offset whose batch fits inside all sources.
  const Roi& admissible_offsets() const { return offsets_; }

  // One draw: a uniformly random labels roi, or nullopt when it has no
  // positive voxel and the 95% rejection fires.
  std::optional<Roi> draw(Rng& rng) const;

  // Draws until acceptance, then augments (transpose, elastic, intensity,
  // section artifacts). Throws ErrorCode::sampling after max_draws draws.
  Batch sample(std::uint64_t seed, int max_draws = kDefaultMaxDraws) const;

 private:
  std::shared_ptr<const FloatVolume> raw_;
  std::shared_ptr<const LabelVolume> labels_;
  std::shared_ptr<const LabelVolume> aux_;
  Coord request_shape_;
  Coord context_;
  AugmentConfig config_;
  Roi offsets_;
};

// ---------------------------------------------------------------------------

template <class T>
Volume<T> warp(const Volume<T>& v, const ElasticField& field, Interpolation interp) {
  if (field.is_identity() || v.roi().empty()) return v;
  const Coord s = v.shape();
  const Coord& o = v.roi().offset;
  Volume<T> out(v.roi(), v.voxel_size());
  auto clamp_idx = [](double p, std::int64_t n) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(p)), 0, n - 1);
  };
  for (std::int64_t y = 0; y < s[1]; ++y) {
    for (std::int64_t x = 0; x < s[2]; ++x) {
      const auto d = field.displacement(double(o[1] + y), double(o[2] + x));
      const double sy = std::clamp(double(y) + d[0], 0.0, double(s[1] - 1));
      const double sx = std::clamp(double(x) + d[1], 0.0, double(s[2] - 1));
      if (interp == Interpolation::nearest) {
        const auto ny = clamp_idx(std::floor(sy + 0.5), s[1]);
        const auto nx = clamp_idx(std::floor(sx + 0.5), s[2]);
        for (std::int64_t z = 0; z < s[0]; ++z) out(z, y, x) = v(z, ny, nx);
      } else {
        const auto y0 = clamp_idx(sy, s[1]);
        const auto x0 = clamp_idx(sx, s[2]);
        const auto y1 = std::min(y0 + 1, s[1] - 1);
        const auto x1 = std::min(x0 + 1, s[2] - 1);
        const double ty = sy - double(y0);
        const double tx = sx - double(x0);
        for (std::int64_t z = 0; z < s[0]; ++z) {
          const double top = (1 - tx) * double(v(z, y0, x0)) + tx * double(v(z, y0, x1));
          const double bottom = (1 - tx) * double(v(z, y1, x0)) + tx * double(v(z, y1, x1));
          const double value = (1 - ty) * top + ty * bottom;
          if constexpr (std::is_floating_point_v<T>) {
            out(z, y, x) = static_cast<T>(value);
          } else {
            out(z, y, x) = static_cast<T>(std::llround(value));
          }
        }
      }
    }
  }
  return out;
}

}  // namespace cleftkit
