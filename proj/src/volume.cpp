#include "cleftkit/volume.hpp"

#include <cmath>

namespace cleftkit {

std::string to_string(const Coord& c) {
  return "(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + ")";
}

VoxelSize::VoxelSize(double z_nm, double y_nm, double x_nm) : z(z_nm), y(y_nm), x(x_nm) {
  if (!(z > 0 && y > 0 && x > 0) || !std::isfinite(z) || !std::isfinite(y) || !std::isfinite(x)) {
    throw Error(ErrorCode::config, "voxel size components must be positive and finite");
  }
}

Roi::Roi(Coord offset_, Coord shape_) : offset(offset_), shape(shape_) {
  for (auto s : shape) {
    if (s < 0) throw Error(ErrorCode::shape, "roi shape must be non-negative", to_string(shape));
  }
}

bool Roi::contains(const Coord& p) const {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < offset[a] || p[a] >= offset[a] + shape[a]) return false;
  }
  return true;
}

bool Roi::contains(const Roi& other) const {
  if (other.empty()) return true;
  for (int a = 0; a < 3; ++a) {
    if (other.offset[a] < offset[a] || other.offset[a] + other.shape[a] > offset[a] + shape[a]) {
      return false;
    }
  }
  return true;
}

std::string to_string(const Roi& r) {
  return "[offset " + to_string(r.offset) + ", shape " + to_string(r.shape) + "]";
}

Roi roi_grow(const Roi& r, const Coord& context) {
  Roi out = r;
  for (int a = 0; a < 3; ++a) {
    if (context[a] < 0) throw Error(ErrorCode::shape, "context must be non-negative", to_string(context));
    out.offset[a] -= context[a];
    out.shape[a] += 2 * context[a];
  }
  return out;
}

Roi roi_intersect(const Roi& a, const Roi& b) {
  Roi out;
  for (int i = 0; i < 3; ++i) {
    const auto lo = std::max(a.offset[i], b.offset[i]);
    const auto hi = std::min(a.offset[i] + a.shape[i], b.offset[i] + b.shape[i]);
    if (hi <= lo) return Roi(a.offset, {0, 0, 0});
    out.offset[i] = lo;
    out.shape[i] = hi - lo;
  }
  return out;
}

std::size_t element_size(DataType t) {
  switch (t) {
    case DataType::u8: return 1;
    case DataType::u16: return 2;
    case DataType::u32: return 4;
    case DataType::u64: return 8;
    case DataType::f32: return 4;
    case DataType::f64: return 8;
  }
  return 0;
}

std::string_view to_string(DataType t) {
  switch (t) {
    case DataType::u8: return "uint8";
    case DataType::u16: return "uint16";
    case DataType::u32: return "uint32";
    case DataType::u64: return "uint64";
    case DataType::f32: return "float32";
    case DataType::f64: return "float64";
  }
  return "unknown";
}

DataType parse_data_type(std::string_view name) {
  if (name == "uint8" || name == "u8") return DataType::u8;
  if (name == "uint16" || name == "u16") return DataType::u16;
  if (name == "uint32" || name == "u32") return DataType::u32;
  if (name == "uint64" || name == "u64") return DataType::u64;
  if (name == "float32" || name == "f32") return DataType::f32;
  if (name == "float64" || name == "f64") return DataType::f64;
  throw Error(ErrorCode::type, "unsupported data type", std::string(name));
}

DataType data_type(const AnyVolume& v) {
  return std::visit([](const auto& vol) { return data_type_of<typename std::decay_t<decltype(vol)>::value_type>(); }, v);
}

const Roi& roi_of(const AnyVolume& v) {
  return std::visit([](const auto& vol) -> const Roi& { return vol.roi(); }, v);
}

AnyVolume make_volume(DataType type, Roi roi, VoxelSize vs, double fill) {
  switch (type) {
    case DataType::u8: return make_any<std::uint8_t>(roi, vs, static_cast<std::uint8_t>(fill));
    case DataType::u16: return make_any<std::uint16_t>(roi, vs, static_cast<std::uint16_t>(fill));
    case DataType::u32: return make_any<std::uint32_t>(roi, vs, static_cast<std::uint32_t>(fill));
    case DataType::u64: return make_any<std::uint64_t>(roi, vs, static_cast<std::uint64_t>(fill));
    case DataType::f32: return make_any<float>(roi, vs, static_cast<float>(fill));
    case DataType::f64: return make_any<double>(roi, vs, fill);
  }
  throw Error(ErrorCode::type, "unsupported data type");
}

AnyVolume read_region(const AnyVolume& v, const Roi& r, double fill) {
  return std::visit(
      [&](const auto& vol) -> AnyVolume {
        using T = typename std::decay_t<decltype(vol)>::value_type;
        return read_region(vol, r, static_cast<T>(fill));
      },
      v);
}

AnyVolume convert(const AnyVolume& v, DataType target) {
  switch (target) {
    case DataType::u8: return convert<std::uint8_t>(v);
    case DataType::u16: return convert<std::uint16_t>(v);
    case DataType::u32: return convert<std::uint32_t>(v);
    case DataType::u64: return convert<std::uint64_t>(v);
    case DataType::f32: return convert<float>(v);
    case DataType::f64: return convert<double>(v);
  }
  throw Error(ErrorCode::type, "unsupported data type");
}

}  // namespace cleftkit
