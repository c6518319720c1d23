#include "cleftkit/n5.hpp"

#include <zlib.h>

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace cleftkit::n5 {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint64_t get_be(const std::uint8_t* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
  return v;
}

template <class T>
auto to_bits(T v) {
  if constexpr (std::is_same_v<T, float>) return std::bit_cast<std::uint32_t>(v);
  else if constexpr (std::is_same_v<T, double>) return std::bit_cast<std::uint64_t>(v);
  else return v;
}

template <class T>
T from_bits(std::uint64_t bits) {
  if constexpr (std::is_same_v<T, float>) return std::bit_cast<float>(static_cast<std::uint32_t>(bits));
  else if constexpr (std::is_same_v<T, double>) return std::bit_cast<double>(bits);
  else return static_cast<T>(bits);
}

template <class T>
void append_big_endian(std::vector<std::uint8_t>& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(T));
  std::uint8_t* p = out.data() + start;
  for (const T v : values) {
    const auto bits = to_bits(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      p[b] = static_cast<std::uint8_t>(bits >> (8 * (sizeof(T) - 1 - b)));
    }
    p += sizeof(T);
  }
}

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> in, int level) {
  z_stream zs{};
  // windowBits 15 + 16 selects the gzip wrapper.
  if (deflateInit2(&zs, level, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorCode::codec, "deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::codec, "gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> in, std::size_t expected,
                                          const std::string& where) {
  z_stream zs{};
  // 15 + 32: accept both gzip and zlib wrappers.
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(ErrorCode::codec, "inflateInit2 failed", where);
  std::vector<std::uint8_t> out(std::max<std::size_t>(expected, 1));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (true) {
    zs.next_out = out.data() + zs.total_out;
    zs.avail_out = static_cast<uInt>(out.size() - zs.total_out);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc == Z_STREAM_END) break;
    if (rc != Z_OK && rc != Z_BUF_ERROR) break;
    if (zs.avail_out == 0) {
      out.resize(out.size() * 2);
      continue;
    }
    if (zs.avail_in == 0) break;
  }
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::codec, "corrupt gzip payload", where);
  out.resize(produced);
  return out;
}

template <class T>
AnyVolume decode_payload(std::span<const std::uint8_t> raw, const Coord& shape) {
  const Roi r({0, 0, 0}, shape);
  std::vector<T> values(static_cast<std::size_t>(r.size()));
  const std::uint8_t* p = raw.data();
  for (auto& v : values) {
    v = from_bits<T>(get_be(p, sizeof(T)));
    p += sizeof(T);
  }
  return Volume<T>(r, {}, std::move(values));
}

std::string temp_suffix() {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream os;
  os << ".tmp." << ::getpid() << "." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
     << counter.fetch_add(1);
  return os.str();
}

json load_json(const fs::path& p) {
  const auto bytes = read_file(p);
  if (!bytes) throw Error(ErrorCode::io, "missing attributes file", p.string());
  try {
    return json::parse(bytes->begin(), bytes->end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::codec, std::string("invalid attributes json: ") + e.what(), p.string());
  }
}

void store_json(const fs::path& p, const json& j) {
  const std::string text = j.dump();
  write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::string_view to_string(Compression c) { return c == Compression::raw ? "raw" : "gzip"; }

void DatasetAttributes::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dimensions[a] < 1) throw Error(ErrorCode::config, "dataset dimensions must be >= 1", cleftkit::to_string(dimensions));
    if (chunk_size[a] < 1) throw Error(ErrorCode::config, "chunk size must be >= 1", cleftkit::to_string(chunk_size));
    if (chunk_size[a] > std::numeric_limits<std::int32_t>::max()) {
      throw Error(ErrorCode::config, "chunk size exceeds 32-bit header range", cleftkit::to_string(chunk_size));
    }
  }
}

Coord DatasetAttributes::grid_shape() const {
  return {ceil_div(dimensions[0], chunk_size[0]), ceil_div(dimensions[1], chunk_size[1]),
          ceil_div(dimensions[2], chunk_size[2])};
}

Roi DatasetAttributes::chunk_roi(const Coord& grid) const {
  Roi r;
  for (int a = 0; a < 3; ++a) {
    r.offset[a] = grid[a] * chunk_size[a];
    r.shape[a] = std::max<std::int64_t>(0, std::min(chunk_size[a], dimensions[a] - r.offset[a]));
  }
  return r;
}

json to_json(const DatasetAttributes& a) {
  json j;
  j["dimensions"] = {a.dimensions[2], a.dimensions[1], a.dimensions[0]};
  j["blockSize"] = {a.chunk_size[2], a.chunk_size[1], a.chunk_size[0]};
  j["dataType"] = std::string(cleftkit::to_string(a.data_type));
  json c;
  c["type"] = std::string(to_string(a.compression));
  if (a.compression == Compression::gzip) c["level"] = a.gzip_level;
  j["compression"] = c;
  return j;
}

DatasetAttributes attributes_from_json(const json& j) {
  DatasetAttributes a;
  try {
    const auto dims = j.at("dimensions").get<std::vector<std::int64_t>>();
    const auto block = j.at("blockSize").get<std::vector<std::int64_t>>();
    if (dims.size() != 3 || block.size() != 3) {
      throw Error(ErrorCode::config, "only 3-dimensional datasets are supported");
    }
    a.dimensions = {dims[2], dims[1], dims[0]};
    a.chunk_size = {block[2], block[1], block[0]};
    a.data_type = parse_data_type(j.at("dataType").get<std::string>());
    const auto& comp = j.at("compression");
    // Old N5 versions wrote the compression as a bare string.
    const std::string type = comp.is_string() ? comp.get<std::string>() : comp.at("type").get<std::string>();
    if (type == "raw") {
      a.compression = Compression::raw;
    } else if (type == "gzip") {
      a.compression = Compression::gzip;
      if (comp.is_object() && comp.contains("level")) a.gzip_level = comp.at("level").get<int>();
    } else {
      throw Error(ErrorCode::config, "unsupported compression", type);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("malformed dataset attributes: ") + e.what());
  }
  a.validate();
  return a;
}

std::vector<std::uint8_t> encode_chunk(const DatasetAttributes& attrs, const Coord& chunk_shape,
                                       const AnyVolume& payload) {
  if (data_type(payload) != attrs.data_type) {
    throw Error(ErrorCode::codec,
                "payload type " + std::string(cleftkit::to_string(data_type(payload))) +
                    " does not match dataset type " + std::string(cleftkit::to_string(attrs.data_type)));
  }
  const Roi shape_roi({0, 0, 0}, chunk_shape);
  const auto& pr = roi_of(payload);
  if (pr.size() != shape_roi.size()) {
    throw Error(ErrorCode::codec,
                "payload has " + std::to_string(pr.size()) + " elements, chunk shape needs " +
                    std::to_string(shape_roi.size()),
                cleftkit::to_string(chunk_shape));
  }
  for (auto s : chunk_shape) {
    if (s < 1 || s > std::numeric_limits<std::int32_t>::max()) {
      throw Error(ErrorCode::codec, "chunk dimension out of range", cleftkit::to_string(chunk_shape));
    }
  }

  std::vector<std::uint8_t> out;
  out.reserve(16);
  put_u16(out, 0);
  put_u16(out, 3);
  for (int a = 2; a >= 0; --a) put_u32(out, static_cast<std::uint32_t>(chunk_shape[a]));

  std::vector<std::uint8_t> body;
  body.reserve(static_cast<std::size_t>(pr.size()) * element_size(attrs.data_type));
  std::visit([&](const auto& vol) { append_big_endian(body, vol.data()); }, payload);

  if (attrs.compression == Compression::gzip) {
    const auto packed = gzip_compress(body, attrs.gzip_level);
    out.insert(out.end(), packed.begin(), packed.end());
  } else {
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

AnyVolume decode_chunk(const DatasetAttributes& attrs, std::span<const std::uint8_t> bytes,
                       const std::string& where) {
  if (bytes.size() < 4) throw Error(ErrorCode::codec, "chunk shorter than its header", where);
  const auto mode = get_be(bytes.data(), 2);
  const auto ndim = get_be(bytes.data() + 2, 2);
  if (mode != 0 && mode != 1) {
    throw Error(ErrorCode::codec, "unsupported chunk mode " + std::to_string(mode), where);
  }
  if (ndim != 3) throw Error(ErrorCode::codec, "chunk has " + std::to_string(ndim) + " dimensions, expected 3", where);
  std::size_t pos = 4;
  const std::size_t header = pos + 4 * ndim + (mode == 1 ? 4 : 0);
  if (bytes.size() < header) throw Error(ErrorCode::codec, "truncated chunk header", where);
  Coord shape{};
  for (int a = 2; a >= 0; --a) {
    shape[a] = static_cast<std::int64_t>(get_be(bytes.data() + pos, 4));
    pos += 4;
    if (shape[a] < 1) throw Error(ErrorCode::codec, "chunk header has a zero dimension", where);
  }
  std::int64_t n = shape[0] * shape[1] * shape[2];
  if (mode == 1) {
    n = static_cast<std::int64_t>(get_be(bytes.data() + pos, 4));
    pos += 4;
    if (n != shape[0] * shape[1] * shape[2]) {
      throw Error(ErrorCode::codec, "varlength chunks are not supported", where);
    }
  }
  const std::size_t esize = element_size(attrs.data_type);
  const std::size_t expected = static_cast<std::size_t>(n) * esize;
  const auto body = bytes.subspan(pos);

  std::vector<std::uint8_t> inflated;
  std::span<const std::uint8_t> raw = body;
  if (attrs.compression == Compression::gzip) {
    inflated = gzip_decompress(body, expected, where);
    raw = inflated;
  }
  if (raw.size() != expected) {
    throw Error(ErrorCode::codec,
                "payload has " + std::to_string(raw.size()) + " bytes, header implies " + std::to_string(expected),
                where);
  }
  switch (attrs.data_type) {
    case DataType::u8: return decode_payload<std::uint8_t>(raw, shape);
    case DataType::u16: return decode_payload<std::uint16_t>(raw, shape);
    case DataType::u32: return decode_payload<std::uint32_t>(raw, shape);
    case DataType::u64: return decode_payload<std::uint64_t>(raw, shape);
    case DataType::f32: return decode_payload<float>(raw, shape);
    case DataType::f64: return decode_payload<double>(raw, shape);
  }
  throw Error(ErrorCode::type, "unsupported data type", where);
}

void ChunkWriteLog::record(const Coord& grid) {
  std::lock_guard lock(mutex_);
  entries_.push_back(grid);
}

std::vector<Coord> ChunkWriteLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::io, "cannot create directory: " + ec.message(), path.parent_path().string());
  const fs::path tmp = path.string() + temp_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open for writing", tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "write failed", tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::io, "rename failed: " + ec.message(), path.string());
  }
}

std::optional<std::vector<std::uint8_t>> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

Dataset Dataset::create(const fs::path& path, const DatasetAttributes& attrs, const json& extra) {
  attrs.validate();
  Dataset ds(path, attrs, extra.is_object() ? extra : json::object());
  ds.write_attributes();
  return ds;
}

Dataset Dataset::open(const fs::path& path) {
  const json j = load_json(path / "attributes.json");
  DatasetAttributes attrs;
  try {
    attrs = attributes_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string());
  }
  json extra = json::object();
  for (const auto& [key, value] : j.items()) {
    if (key != "dimensions" && key != "blockSize" && key != "dataType" && key != "compression") {
      extra[key] = value;
    }
  }
  return Dataset(path, attrs, std::move(extra));
}

void Dataset::write_attributes() const {
  json j = to_json(attrs_);
  for (const auto& [key, value] : extra_.items()) j[key] = value;
  store_json(path_ / "attributes.json", j);
}

void Dataset::set_attribute(const std::string& key, json value) {
  extra_[key] = std::move(value);
  write_attributes();
}

VoxelSize Dataset::voxel_size() const {
  if (extra_.contains("resolution")) {
    const auto r = extra_.at("resolution").get<std::vector<double>>();
    if (r.size() == 3) return VoxelSize(r[2], r[1], r[0]);
  }
  return VoxelSize{};
}

void Dataset::set_voxel_size(const VoxelSize& vs) { set_attribute("resolution", {vs.x, vs.y, vs.z}); }

fs::path Dataset::chunk_path(const Coord& grid) const {
  return path_ / std::to_string(grid[2]) / std::to_string(grid[1]) / std::to_string(grid[0]);
}

std::vector<Coord> Dataset::chunks_touching(const Roi& r) const {
  std::vector<Coord> out;
  const Roi inside = roi_intersect(r, bounds());
  if (inside.empty()) return out;
  Coord lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = inside.offset[a] / attrs_.chunk_size[a];
    hi[a] = (inside.offset[a] + inside.shape[a] - 1) / attrs_.chunk_size[a];
  }
  for (auto z = lo[0]; z <= hi[0]; ++z)
    for (auto y = lo[1]; y <= hi[1]; ++y)
      for (auto x = lo[2]; x <= hi[2]; ++x) out.push_back({z, y, x});
  return out;
}

void Dataset::check_type(DataType t) const {
  if (t != attrs_.data_type) {
    throw Error(ErrorCode::type,
                "dataset holds " + std::string(cleftkit::to_string(attrs_.data_type)) + ", requested " +
                    std::string(cleftkit::to_string(t)),
                path_.string());
  }
}

std::optional<AnyVolume> Dataset::read_chunk(const Coord& grid) const {
  const fs::path p = chunk_path(grid);
  const auto bytes = read_file(p);
  if (!bytes) return std::nullopt;
  AnyVolume chunk = decode_chunk(attrs_, *bytes, p.string());
  const Roi expected = attrs_.chunk_roi(grid);
  const Coord stored = roi_of(chunk).shape;
  for (int a = 0; a < 3; ++a) {
    if (stored[a] > attrs_.chunk_size[a]) {
      throw Error(ErrorCode::codec, "chunk header " + cleftkit::to_string(stored) + " exceeds block size",
                  p.string());
    }
  }
  // Some writers store edge chunks at full block size; keep only the part
  // inside the dataset.
  return std::visit(
      [&](auto& vol) -> AnyVolume {
        auto placed = vol.translated(expected.offset);
        if (placed.roi() == expected) return placed;
        using T = typename std::decay_t<decltype(vol)>::value_type;
        return read_region(placed, expected, T{});
      },
      chunk);
}

void Dataset::write_chunk(const AnyVolume& chunk) const {
  const Roi& r = roi_of(chunk);
  Coord grid{};
  for (int a = 0; a < 3; ++a) {
    if (r.offset[a] < 0 || r.offset[a] % attrs_.chunk_size[a] != 0) {
      throw Error(ErrorCode::bounds, "chunk write is not grid aligned", cleftkit::to_string(r));
    }
    grid[a] = r.offset[a] / attrs_.chunk_size[a];
  }
  if (attrs_.chunk_roi(grid) != r) {
    throw Error(ErrorCode::bounds, "chunk write does not match the chunk extent", cleftkit::to_string(r));
  }
  check_type(cleftkit::data_type(chunk));
  const auto bytes = encode_chunk(attrs_, r.shape, chunk);
  write_file_atomic(chunk_path(grid), bytes);
  if (log_) log_->record(grid);
}

AnyVolume Dataset::read_roi(const Roi& r, double fill) const {
  AnyVolume out = make_volume(attrs_.data_type, r, voxel_size(), fill);
  for (const auto& grid : chunks_touching(r)) {
    auto chunk = read_chunk(grid);
    if (!chunk) continue;
    std::visit(
        [&](auto& dst) {
          using V = std::decay_t<decltype(dst)>;
          paste(dst, std::get<V>(*chunk));
        },
        out);
  }
  return out;
}

void Dataset::write_roi(const AnyVolume& v) const {
  check_type(cleftkit::data_type(v));
  const Roi& r = roi_of(v);
  if (r.empty()) return;
  if (!bounds().contains(r)) {
    throw Error(ErrorCode::bounds, "write " + cleftkit::to_string(r) + " exceeds dataset bounds", path_.string());
  }
  for (const auto& grid : chunks_touching(r)) {
    const Roi cr = attrs_.chunk_roi(grid);
    std::visit(
        [&](const auto& src) {
          using V = std::decay_t<decltype(src)>;
          using T = typename V::value_type;
          V chunk(cr, src.voxel_size(), T{});
          if (!r.contains(cr)) {
            if (auto existing = read_chunk(grid)) chunk = std::get<V>(std::move(*existing));
          }
          paste(chunk, src);
          write_chunk(AnyVolume(std::move(chunk)));
        },
        v);
  }
}

Container::Container(fs::path root) : root_(std::move(root)) {
  const fs::path attrs = root_ / "attributes.json";
  if (fs::exists(attrs)) {
    const json j = load_json(attrs);
    if (!j.contains("n5")) throw Error(ErrorCode::config, "not an N5 container root", root_.string());
    return;
  }
  json j;
  j["n5"] = std::string(kVersion);
  store_json(attrs, j);
}

bool Container::has_dataset(const std::string& name) const {
  return fs::exists(root_ / name / "attributes.json");
}

Dataset Container::create_dataset(const std::string& name, const DatasetAttributes& attrs, const json& extra) const {
  return Dataset::create(root_ / name, attrs, extra);
}

Dataset Container::open_dataset(const std::string& name) const { return Dataset::open(root_ / name); }

}  // namespace cleftkit::n5
