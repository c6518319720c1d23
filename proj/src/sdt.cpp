#include "cleftkit/sdt.hpp"

#include <cmath>
#include <limits>

namespace cleftkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas f[q] + (w (p - q))^2 over the finite samples of
// one line (Felzenszwalb & Huttenlocher), written back into `line`.
class LineTransform {
 public:
  void run(std::vector<double>& line, double w) {
    const auto n = static_cast<std::int64_t>(line.size());
    f_.assign(line.begin(), line.end());
    v_.resize(line.size());
    z_.resize(line.size() + 1);
    const double w2 = w * w;

    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
      if (!std::isfinite(f_[q])) continue;
      if (k < 0) {
        k = 0;
        v_[0] = q;
        z_[0] = -kInf;
        z_[1] = kInf;
        continue;
      }
      // z_[0] is -inf, so k never drops below zero.
      double s = intersection(q, v_[k], w2);
      while (s <= z_[k]) s = intersection(q, v_[--k], w2);
      ++k;
      v_[k] = q;
      z_[k] = s;
      z_[k + 1] = kInf;
    }
    if (k < 0) {
      std::fill(line.begin(), line.end(), kInf);
      return;
    }
    std::int64_t j = 0;
    for (std::int64_t p = 0; p < n; ++p) {
      while (z_[j + 1] < double(p)) ++j;
      const double d = w * double(p - v_[j]);
      line[p] = d * d + f_[v_[j]];
    }
  }

 private:
  double intersection(std::int64_t q, std::int64_t r, double w2) const {
    return ((f_[q] + w2 * double(q) * double(q)) - (f_[r] + w2 * double(r) * double(r))) /
           (2.0 * w2 * double(q - r));
  }

  std::vector<double> f_;
  std::vector<std::int64_t> v_;
  std::vector<double> z_;
};

void transform_axis(Volume<double>& d, int axis, double spacing) {
  const Coord s = d.shape();
  const std::int64_t n = s[axis];
  if (n <= 1) return;
  const std::int64_t stride = axis == 2 ? 1 : (axis == 1 ? s[2] : s[1] * s[2]);
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  auto data = d.data();
  std::vector<double> line(static_cast<std::size_t>(n));
  LineTransform lt;
  for (std::int64_t i = 0; i < s[a1]; ++i) {
    for (std::int64_t j = 0; j < s[a2]; ++j) {
      Coord c{0, 0, 0};
      c[a1] = i;
      c[a2] = j;
      const auto base = static_cast<std::int64_t>(d.index(c[0], c[1], c[2]));
      for (std::int64_t p = 0; p < n; ++p) line[p] = data[base + p * stride];
      lt.run(line, spacing);
      for (std::int64_t p = 0; p < n; ++p) data[base + p * stride] = line[p];
    }
  }
}

}  // namespace

Volume<double> squared_distance_to_sites(const LabelVolume& sites, const VoxelSize& voxel_size) {
  Volume<double> d(sites.roi(), voxel_size, kInf);
  const auto in = sites.data();
  auto out = d.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i]) out[i] = 0.0;
  }
  transform_axis(d, 2, voxel_size.x);
  transform_axis(d, 1, voxel_size.y);
  transform_axis(d, 0, voxel_size.z);
  return d;
}

Volume<double> signed_distance(const LabelVolume& labels, const VoxelSize& voxel_size) {
  std::size_t n_fg = 0;
  for (auto v : labels.data()) n_fg += v ? 1 : 0;
  if (n_fg == 0 || n_fg == labels.size()) {
    throw Error(ErrorCode::empty_class, "signed distance transform needs both foreground and background voxels",
                to_string(labels.roi()));
  }
  LabelVolume background(labels.roi(), voxel_size);
  {
    auto in = labels.data();
    auto out = background.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] ? 0 : 1;
  }
  const auto to_background = squared_distance_to_sites(background, voxel_size);
  const auto to_foreground = squared_distance_to_sites(labels, voxel_size);

  Volume<double> out(labels.roi(), voxel_size);
  auto in = labels.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = in[i] ? std::sqrt(to_background.data()[i]) : -std::sqrt(to_foreground.data()[i]);
  }
  return out;
}

FloatVolume sedt(const LabelVolume& labels, const VoxelSize& voxel_size) {
  return convert<float>(signed_distance(labels, voxel_size));
}

FloatVolume stdt(const FloatVolume& sedt_volume, double scale_nm) {
  if (!(scale_nm > 0) || !std::isfinite(scale_nm)) {
    throw Error(ErrorCode::config, "stdt scale must be positive", std::to_string(scale_nm));
  }
  const float hi = std::nextafter(1.0f, 0.0f);
  FloatVolume out(sedt_volume.roi(), sedt_volume.voxel_size());
  auto in = sedt_volume.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const auto t = static_cast<float>(std::tanh(static_cast<double>(in[i]) / scale_nm));
    o[i] = std::clamp(t, -hi, hi);
  }
  return out;
}

LabelVolume threshold_to_labels(const FloatVolume& v, float t) {
  LabelVolume out(v.roi(), v.voxel_size());
  auto in = v.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > t ? 1 : 0;
  return out;
}

}  // namespace cleftkit
