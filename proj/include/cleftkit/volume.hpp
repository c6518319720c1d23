#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cleftkit/error.hpp"

namespace cleftkit {

// Voxel coordinates and extents, always ordered (z, y, x).
using Coord = std::array<std::int64_t, 3>;

std::string to_string(const Coord& c);

// Physical extent of one voxel in nanometers. The default is the ssTEM
// resolution of 40 x 4 x 4 nm.
struct VoxelSize {
  double z = 40.0;
  double y = 4.0;
  double x = 4.0;

  VoxelSize() = default;
  VoxelSize(double z_nm, double y_nm, double x_nm);

  double operator[](std::size_t axis) const { return axis == 0 ? z : (axis == 1 ? y : x); }
  double voxel_volume() const { return z * y * x; }
  std::array<double, 3> as_array() const { return {z, y, x}; }

  friend bool operator==(const VoxelSize&, const VoxelSize&) = default;
};

struct Roi {
  Coord offset{0, 0, 0};
  Coord shape{0, 0, 0};

  Roi() = default;
  Roi(Coord offset_, Coord shape_);

  bool empty() const { return shape[0] == 0 || shape[1] == 0 || shape[2] == 0; }
  std::int64_t size() const { return shape[0] * shape[1] * shape[2]; }
  Coord end() const { return {offset[0] + shape[0], offset[1] + shape[1], offset[2] + shape[2]}; }
  bool contains(const Coord& p) const;
  // An empty roi is contained in anything.
  bool contains(const Roi& other) const;

  friend bool operator==(const Roi&, const Roi&) = default;
};

std::string to_string(const Roi& r);

// Offset decreases by `context`, shape grows by 2 * context per axis.
Roi roi_grow(const Roi& r, const Coord& context);
// Largest roi inside both; an empty roi (at a's offset) when they are disjoint.
Roi roi_intersect(const Roi& a, const Roi& b);

// Floor division for possibly negative coordinates.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}
constexpr std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

enum class DataType : std::uint8_t { u8, u16, u32, u64, f32, f64 };

std::size_t element_size(DataType t);
// N5 names: uint8 ... float64.
std::string_view to_string(DataType t);
DataType parse_data_type(std::string_view name);

template <class T>
constexpr DataType data_type_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return DataType::u8;
  else if constexpr (std::is_same_v<T, std::uint16_t>) return DataType::u16;
  else if constexpr (std::is_same_v<T, std::uint32_t>) return DataType::u32;
  else if constexpr (std::is_same_v<T, std::uint64_t>) return DataType::u64;
  else if constexpr (std::is_same_v<T, float>) return DataType::f32;
  else if constexpr (std::is_same_v<T, double>) return DataType::f64;
  else static_assert(!sizeof(T), "unsupported element type");
}

// Dense 3D array over a roi, row-major with x fastest.
template <class T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  explicit Volume(Roi roi, VoxelSize voxel_size = {}, T fill = T{})
      : roi_(roi), voxel_size_(voxel_size), data_(static_cast<std::size_t>(roi.size()), fill) {}

  Volume(Roi roi, VoxelSize voxel_size, std::vector<T> data)
      : roi_(roi), voxel_size_(voxel_size), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != roi_.size()) {
      throw Error(ErrorCode::shape,
                  "buffer holds " + std::to_string(data_.size()) + " elements, roi needs " +
                      std::to_string(roi_.size()),
                  to_string(roi_));
    }
  }

  const Roi& roi() const { return roi_; }
  const Coord& shape() const { return roi_.shape; }
  const VoxelSize& voxel_size() const { return voxel_size_; }
  std::size_t size() const { return data_.size(); }

  std::span<const T> data() const& { return data_; }
  std::span<T> data() & { return data_; }
  // a temporary hands over its storage, so `for (x : f().data())` is safe
  std::vector<T> data() && { return std::move(data_); }
  std::vector<T>& buffer() { return data_; }

  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>((z * roi_.shape[1] + y) * roi_.shape[2] + x);
  }

  // Local (zero-based) indexing.
  T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) { return data_[index(z, y, x)]; }
  const T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data_[index(z, y, x)];
  }

  // World-coordinate indexing; p must lie inside roi().
  const T& at(const Coord& p) const {
    return (*this)(p[0] - roi_.offset[0], p[1] - roi_.offset[1], p[2] - roi_.offset[2]);
  }
  T& at(const Coord& p) {
    return (*this)(p[0] - roi_.offset[0], p[1] - roi_.offset[1], p[2] - roi_.offset[2]);
  }

  // Same data under a new offset.
  Volume translated(const Coord& new_offset) const {
    Volume out = *this;
    out.roi_.offset = new_offset;
    return out;
  }

  void set_voxel_size(VoxelSize vs) { voxel_size_ = vs; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Roi roi_;
  VoxelSize voxel_size_;
  std::vector<T> data_;
};

using LabelVolume = Volume<std::uint8_t>;
using FloatVolume = Volume<float>;

using AnyVolume = std::variant<Volume<std::uint8_t>, Volume<std::uint16_t>, Volume<std::uint32_t>,
                               Volume<std::uint64_t>, Volume<float>, Volume<double>>;

DataType data_type(const AnyVolume& v);
const Roi& roi_of(const AnyVolume& v);

template <class T>
AnyVolume make_any(Roi roi, VoxelSize vs = {}, T fill = T{}) {
  return Volume<T>(roi, vs, fill);
}
AnyVolume make_volume(DataType type, Roi roi, VoxelSize vs = {}, double fill = 0.0);

// Copies `src` into `dst` wherever their rois overlap.
template <class T>
void paste(Volume<T>& dst, const Volume<T>& src) {
  const Roi overlap = roi_intersect(dst.roi(), src.roi());
  if (overlap.empty()) return;
  const Coord& so = src.roi().offset;
  const Coord& d_off = dst.roi().offset;
  const auto row = static_cast<std::size_t>(overlap.shape[2]);
  for (std::int64_t z = overlap.offset[0]; z < overlap.end()[0]; ++z) {
    for (std::int64_t y = overlap.offset[1]; y < overlap.end()[1]; ++y) {
      const T* from = &src(z - so[0], y - so[1], overlap.offset[2] - so[2]);
      T* to = &dst(z - d_off[0], y - d_off[1], overlap.offset[2] - d_off[2]);
      std::copy_n(from, row, to);
    }
  }
}

// Volume over `r`: voxels inside `v` are copied, the rest set to `fill`.
template <class T>
Volume<T> read_region(const Volume<T>& v, const Roi& r, T fill = T{}) {
  Volume<T> out(r, v.voxel_size(), fill);
  paste(out, v);
  return out;
}

AnyVolume read_region(const AnyVolume& v, const Roi& r, double fill = 0.0);

template <class To, class From>
Volume<To> convert(const Volume<From>& v) {
  if constexpr (std::is_same_v<To, From>) {
    return v;
  } else {
    std::vector<To> data(v.size());
    std::transform(v.data().begin(), v.data().end(), data.begin(),
                   [](From x) { return static_cast<To>(x); });
    return Volume<To>(v.roi(), v.voxel_size(), std::move(data));
  }
}

template <class To>
Volume<To> convert(const AnyVolume& v) {
  return std::visit([](const auto& vol) { return convert<To>(vol); }, v);
}

AnyVolume convert(const AnyVolume& v, DataType target);

// Nonzero voxels become 1, optionally treating `reserved` as background.
template <class T>
LabelVolume binarize(const Volume<T>& v, std::optional<T> reserved = std::nullopt) {
  std::vector<std::uint8_t> out(v.size());
  const auto in = v.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (in[i] != T{} && !(reserved && in[i] == *reserved)) ? 1 : 0;
  }
  return LabelVolume(v.roi(), v.voxel_size(), std::move(out));
}

}  // namespace cleftkit
