#pragma once

// Filesystem-backed chunked volume storage in the N5 layout.
//
// A dataset is a directory holding `attributes.json` plus one file per chunk
// at `<grid_x>/<grid_y>/<grid_z>`. Each chunk file is independently decodable:
//
//   u16 mode (0) | u16 ndim | u32 dims[ndim] (x, y, z) | payload
//
// with every integer and element big-endian and the payload (x fastest)
// compressed according to the dataset's compression. The API speaks (z, y, x);
// the reversal to on-disk (x, y, z) happens here.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cleftkit/volume.hpp"

namespace cleftkit::n5 {

enum class Compression { raw, gzip };

std::string_view to_string(Compression c);

struct DatasetAttributes {
  Coord dimensions{1, 1, 1};
  Coord chunk_size{64, 64, 64};
  DataType data_type = DataType::u8;
  Compression compression = Compression::gzip;
  int gzip_level = -1;

  void validate() const;
  Roi bounds() const { return Roi({0, 0, 0}, dimensions); }
  Coord grid_shape() const;
  // Roi of one chunk, truncated at the dataset edge.
  Roi chunk_roi(const Coord& grid) const;

  friend bool operator==(const DatasetAttributes&, const DatasetAttributes&) = default;
};

// Canonical attributes.json content: dimensions, blockSize, dataType,
// compression, then any extra keys in insertion order.
nlohmann::ordered_json to_json(const DatasetAttributes& attrs);
DatasetAttributes attributes_from_json(const nlohmann::ordered_json& j);

// Chunk codec. `chunk_shape` is (z, y, x); the payload is row-major with x
// fastest and its element type must match attrs.data_type.
std::vector<std::uint8_t> encode_chunk(const DatasetAttributes& attrs, const Coord& chunk_shape,
                                       const AnyVolume& payload);

template <class T>
std::vector<std::uint8_t> encode_chunk(const DatasetAttributes& attrs, const Coord& chunk_shape,
                                       std::span<const T> payload) {
  const Roi r({0, 0, 0}, chunk_shape);
  if (static_cast<std::int64_t>(payload.size()) != r.size()) {
    throw Error(ErrorCode::codec,
                "payload has " + std::to_string(payload.size()) + " elements, chunk shape needs " +
                    std::to_string(r.size()),
                cleftkit::to_string(chunk_shape));
  }
  return encode_chunk(attrs, chunk_shape,
                      AnyVolume(Volume<T>(r, {}, std::vector<T>(payload.begin(), payload.end()))));
}

// Decodes a chunk file. The returned volume has offset (0,0,0) and the shape
// recorded in the header. `where` is reported in errors.
AnyVolume decode_chunk(const DatasetAttributes& attrs, std::span<const std::uint8_t> bytes,
                       const std::string& where = {});

// Records every chunk file write; used to check that parallel writers never
// touch the same chunk.
class ChunkWriteLog {
 public:
  void record(const Coord& grid);
  std::vector<Coord> entries() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Coord> entries_;
};

// Handle to one dataset. Copies share nothing mutable except the optional
// write log. Concurrent reads are always safe; concurrent writes are safe when
// the sets of touched chunks are disjoint. Chunk files are replaced atomically
// (temporary file + rename).
class Dataset {
 public:
  static Dataset create(const std::filesystem::path& path, const DatasetAttributes& attrs,
                        const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
  static Dataset open(const std::filesystem::path& path);

  const std::filesystem::path& path() const { return path_; }
  const DatasetAttributes& attributes() const { return attrs_; }
  DataType data_type() const { return attrs_.data_type; }
  Roi bounds() const { return attrs_.bounds(); }

  // Non-standard keys of attributes.json (e.g. "resolution").
  const nlohmann::ordered_json& extra_attributes() const { return extra_; }
  // Not safe to call concurrently with other attribute writers.
  void set_attribute(const std::string& key, nlohmann::ordered_json value);

  // "resolution" attribute ([x, y, z] nm); defaults to 40 x 4 x 4.
  VoxelSize voxel_size() const;
  void set_voxel_size(const VoxelSize& vs);

  std::filesystem::path chunk_path(const Coord& grid) const;
  std::vector<Coord> chunks_touching(const Roi& r) const;

  // Volume placed at the chunk's world roi, or nullopt if the file is missing.
  std::optional<AnyVolume> read_chunk(const Coord& grid) const;
  // `chunk` must cover exactly chunk_roi(grid) for some grid position.
  void write_chunk(const AnyVolume& chunk) const;

  // Voxels outside the dataset or in missing chunks read as `fill`.
  AnyVolume read_roi(const Roi& r, double fill = 0.0) const;

  template <class T>
  Volume<T> read(const Roi& r, T fill = T{}) const {
    check_type(data_type_of<T>());
    return std::get<Volume<T>>(read_roi(r, static_cast<double>(fill)));
  }

  // Read-modify-write of every chunk intersecting v.roi(). Unaligned writes
  // are single-writer only.
  void write_roi(const AnyVolume& v) const;

  template <class T>
  void write(const Volume<T>& v) const {
    write_roi(AnyVolume(v));
  }

  void set_write_log(std::shared_ptr<ChunkWriteLog> log) { log_ = std::move(log); }

 private:
  Dataset(std::filesystem::path path, DatasetAttributes attrs, nlohmann::ordered_json extra)
      : path_(std::move(path)), attrs_(attrs), extra_(std::move(extra)) {}

  void check_type(DataType t) const;
  void write_attributes() const;

  std::filesystem::path path_;
  DatasetAttributes attrs_;
  nlohmann::ordered_json extra_;
  std::shared_ptr<ChunkWriteLog> log_;
};

// An N5 container root (`attributes.json` with an "n5" version key) holding
// named datasets.
class Container {
 public:
  static constexpr std::string_view kVersion = "2.5.1";

  // Creates the root if missing.
  explicit Container(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  bool has_dataset(const std::string& name) const;
  Dataset create_dataset(const std::string& name, const DatasetAttributes& attrs,
                         const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) const;
  Dataset open_dataset(const std::string& name) const;

 private:
  std::filesystem::path root_;
};

// Atomic whole-file write used for chunks and attributes.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::optional<std::vector<std::uint8_t>> read_file(const std::filesystem::path& path);

}  // namespace cleftkit::n5
