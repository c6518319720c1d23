#include "cleftkit/metrics.hpp"

#include <cmath>
#include <limits>

#include "cleftkit/pyramid.hpp"
#include "cleftkit/sdt.hpp"

namespace cleftkit {

namespace {

LabelVolume positives(const LabelVolume& v, const LabelVolume* ignore) {
  LabelVolume out(v.roi(), v.voxel_size());
  auto in = v.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = (in[i] && !(ignore && ignore->data()[i])) ? 1 : 0;
  }
  return out;
}

std::int64_t count(const LabelVolume& v) {
  std::int64_t n = 0;
  for (auto x : v.data()) n += x ? 1 : 0;
  return n;
}

// Mean distance from the positives of `from` to the nearest positive of `to`.
double mean_distance(const LabelVolume& from, std::int64_t n_from, const LabelVolume& to, std::int64_t n_to,
                     const VoxelSize& vs) {
  if (n_from == 0) return 0.0;
  if (n_to == 0) return std::numeric_limits<double>::infinity();
  const auto d2 = squared_distance_to_sites(to, vs);
  double sum = 0.0;
  auto f = from.data();
  auto d = d2.data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i]) sum += std::sqrt(d[i]);
  }
  return sum / static_cast<double>(n_from);
}

void convolve_axis(Volume<double>& v, int axis, const std::vector<double>& taps) {
  const auto radius = static_cast<std::int64_t>(taps.size() / 2);
  if (radius == 0) return;
  const Coord s = v.shape();
  const std::int64_t n = s[axis];
  const std::int64_t stride = axis == 2 ? 1 : (axis == 1 ? s[2] : s[1] * s[2]);
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  auto data = v.data();
  std::vector<double> line(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < s[a1]; ++i) {
    for (std::int64_t j = 0; j < s[a2]; ++j) {
      Coord c{0, 0, 0};
      c[a1] = i;
      c[a2] = j;
      const auto base = static_cast<std::int64_t>(v.index(c[0], c[1], c[2]));
      for (std::int64_t p = 0; p < n; ++p) line[p] = data[base + p * stride];
      for (std::int64_t p = 0; p < n; ++p) {
        double acc = 0.0;
        const auto lo = std::max<std::int64_t>(0, p - radius);
        const auto hi = std::min<std::int64_t>(n - 1, p + radius);
        for (auto q = lo; q <= hi; ++q) acc += taps[static_cast<std::size_t>(q - p + radius)] * line[q];
        data[base + p * stride] = acc;
      }
    }
  }
}

}  // namespace

CleftScore cleft_score(const LabelVolume& pred, const LabelVolume& truth, const VoxelSize& voxel_size,
                       const LabelVolume* ignore) {
  if (pred.roi() != truth.roi()) {
    throw Error(ErrorCode::shape, "prediction and ground truth cover different rois",
                to_string(pred.roi()) + " vs " + to_string(truth.roi()));
  }
  if (ignore && ignore->roi() != pred.roi()) {
    throw Error(ErrorCode::shape, "ignore mask covers a different roi", to_string(ignore->roi()));
  }
  const auto p = positives(pred, ignore);
  const auto t = positives(truth, ignore);
  CleftScore s;
  s.n_pred_pos = count(p);
  s.n_true_pos = count(t);
  s.fpd_nm = mean_distance(p, s.n_pred_pos, t, s.n_true_pos, voxel_size);
  s.fnd_nm = mean_distance(t, s.n_true_pos, p, s.n_pred_pos, voxel_size);
  s.cremi_score_nm = (s.fpd_nm + s.fnd_nm) / 2.0;
  s.unmatched = (s.n_pred_pos == 0) != (s.n_true_pos == 0);
  return s;
}

std::vector<double> gaussian_kernel(double sigma_voxels) {
  if (!(sigma_voxels > 0)) throw Error(ErrorCode::config, "gaussian sigma must be positive");
  const auto radius = static_cast<std::int64_t>(std::ceil(4.0 * sigma_voxels));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * double(i) * double(i) / (sigma_voxels * sigma_voxels));
    taps[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : taps) w /= sum;
  return taps;
}

FloatVolume psf_density(const FloatVolume& pred, const std::array<double, 3>& sigma_nm,
                        const VoxelSize& output_voxel_size) {
  const VoxelSize& vs = pred.voxel_size();
  Coord factors{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(sigma_nm[a] > 0)) throw Error(ErrorCode::config, "psf sigma must be positive on every axis");
    const double ratio = output_voxel_size[a] / vs[a];
    factors[a] = std::llround(ratio);
    if (factors[a] < 1 || std::abs(ratio - double(factors[a])) > 1e-6 * ratio) {
      throw Error(ErrorCode::config, "output voxel size must be an integer multiple of the input voxel size");
    }
  }
  auto blurred = convert<double>(pred);
  for (int a = 2; a >= 0; --a) {
    convolve_axis(blurred, a, gaussian_kernel(sigma_nm[static_cast<std::size_t>(a)] / vs[static_cast<std::size_t>(a)]));
  }
  return downscale(blurred, factors);
}

}  // namespace cleftkit
