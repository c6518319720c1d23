#include "cleftkit/phantom.hpp"

#include <cmath>
#include <numbers>

#include "cleftkit/augment.hpp"

namespace cleftkit {

Phantom make_phantom(const Coord& shape, std::uint64_t seed, const VoxelSize& voxel_size,
                     const PhantomOptions& options) {
  if (!(options.sample_fraction > 0 && options.sample_fraction <= 0.5)) {
    throw Error(ErrorCode::config, "sample fraction must be in (0, 0.5]");
  }
  const Roi roi({0, 0, 0}, shape);
  if (roi.empty()) throw Error(ErrorCode::shape, "phantom shape must be positive", to_string(shape));
  Rng rng(seed);
  Phantom p{FloatVolume(roi, voxel_size), LabelVolume(roi, voxel_size), LabelVolume(roi, voxel_size)};

  // Ball in voxel units, scaled per axis so it keeps the requested fraction
  // of a non-cubic volume.
  const double k = std::cbrt(options.sample_fraction * 3.0 / (4.0 * std::numbers::pi));
  const std::array<double, 3> radius{k * double(shape[0]), k * double(shape[1]), k * double(shape[2])};
  const std::array<double, 3> center{(double(shape[0]) - 1) / 2, (double(shape[1]) - 1) / 2, (double(shape[2]) - 1) / 2};
  auto inside = [&](double z, double y, double x, double scale) {
    const double a = (z - center[0]) / (radius[0] * scale);
    const double b = (y - center[1]) / (radius[1] * scale);
    const double c = (x - center[2]) / (radius[2] * scale);
    return a * a + b * b + c * c <= 1.0;
  };
  for (std::int64_t z = 0; z < shape[0]; ++z)
    for (std::int64_t y = 0; y < shape[1]; ++y)
      for (std::int64_t x = 0; x < shape[2]; ++x) p.sample(z, y, x) = inside(double(z), double(y), double(x), 1.0);

  // Discs one or two sections thick, centred well inside the ball.
  for (int i = 0; i < options.clefts; ++i) {
    double cz = 0, cy = 0, cx = 0;
    do {
      cz = rng.uniform(0, double(shape[0]));
      cy = rng.uniform(0, double(shape[1]));
      cx = rng.uniform(0, double(shape[2]));
    } while (!inside(cz, cy, cx, 0.7));
    const auto thickness = 1 + rng.uniform_int(2);
    const double r = rng.uniform(2.0, std::max(3.0, 0.08 * double(std::min(shape[1], shape[2]))));
    const auto z0 = static_cast<std::int64_t>(cz);
    for (std::int64_t z = z0; z < std::min(z0 + thickness, shape[0]); ++z)
      for (std::int64_t y = 0; y < shape[1]; ++y)
        for (std::int64_t x = 0; x < shape[2]; ++x) {
          const double dy = double(y) - cy, dx = double(x) - cx;
          if (dy * dy + dx * dx <= r * r && p.sample(z, y, x)) p.clefts(z, y, x) = 1;
        }
  }

  auto raw = p.raw.data();
  auto sample = p.sample.data();
  auto clefts = p.clefts.data();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double base = clefts[i] ? options.cleft : sample[i] ? options.tissue : options.background;
    raw[i] = static_cast<float>(std::clamp(base + rng.uniform(-options.noise, options.noise), 0.0, 1.0));
  }
  return p;
}

}  // namespace cleftkit
