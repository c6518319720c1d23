#include <fstream>
#include <random>
#include <thread>

#include "doctest.h"

#include "cleftkit/n5.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace cleftkit;
using n5::Compression;
using n5::DatasetAttributes;

namespace {

DatasetAttributes attrs_for(DataType t, Compression c, Coord dims = {1, 1, 1}, Coord chunk = {1, 1, 1}) {
  DatasetAttributes a;
  a.dimensions = dims;
  a.chunk_size = chunk;
  a.data_type = t;
  a.compression = c;
  return a;
}

template <class T>
Volume<T> random_volume(std::mt19937_64& rng, const Roi& r) {
  Volume<T> v(r);
  for (auto& x : v.data()) {
    if constexpr (std::is_floating_point_v<T>) {
      x = static_cast<T>(std::uniform_real_distribution<double>(-1e3, 1e3)(rng));
    } else {
      x = static_cast<T>(rng());
    }
  }
  return v;
}

std::vector<std::uint8_t> header(Coord zyx) {
  std::vector<std::uint8_t> h{0, 0, 0, 3};
  for (int a = 2; a >= 0; --a) {
    const auto d = static_cast<std::uint32_t>(zyx[a]);
    for (int shift : {24, 16, 8, 0}) h.push_back(std::uint8_t(d >> shift));
  }
  return h;
}

}  // namespace

TEST_CASE("chunk byte layout") {
  const std::vector<std::uint8_t> u8{7};
  const auto bytes = n5::encode_chunk(attrs_for(DataType::u8, Compression::raw), {1, 1, 1},
                                      std::span<const std::uint8_t>(u8));
  CHECK(bytes == std::vector<std::uint8_t>{0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 7});

  // (z, y, x) = (2, 1, 1): header dims are written x, y, z.
  const std::vector<std::uint16_t> u16{1, 2};
  const auto b16 = n5::encode_chunk(attrs_for(DataType::u16, Compression::raw, {2, 1, 1}), {2, 1, 1},
                                    std::span<const std::uint16_t>(u16));
  auto expected = header({2, 1, 1});
  expected.insert(expected.end(), {0, 1, 0, 2});
  CHECK(b16 == expected);

  // f32 big-endian
  const std::vector<float> f{1.0f};
  const auto bf = n5::encode_chunk(attrs_for(DataType::f32, Compression::raw), {1, 1, 1}, std::span<const float>(f));
  CHECK(std::vector<std::uint8_t>(bf.begin() + 16, bf.end()) == std::vector<std::uint8_t>{0x3f, 0x80, 0, 0});

  // gzip covers the payload only
  const auto bg = n5::encode_chunk(attrs_for(DataType::u16, Compression::gzip, {2, 1, 1}), {2, 1, 1},
                                   std::span<const std::uint16_t>(u16));
  CHECK(std::vector<std::uint8_t>(bg.begin(), bg.begin() + 16) == header({2, 1, 1}));
  CHECK(oracle::gunzip({bg.begin() + 16, bg.end()}) == std::vector<std::uint8_t>{0, 1, 0, 2});
}

TEST_CASE("chunk codec errors") {
  const std::vector<std::uint8_t> two{1, 2};
  CHECK_THROWS_AS(n5::encode_chunk(attrs_for(DataType::u8, Compression::raw), {1, 1, 1},
                                   std::span<const std::uint8_t>(two)),
                  Error);
  const auto a = attrs_for(DataType::u8, Compression::raw);
  std::vector<std::uint8_t> bad{0, 0, 0, 3, 0, 0};
  try {
    n5::decode_chunk(a, bad, "ds/0/0/0");
    FAIL("expected a codec error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::codec);
    CHECK(std::string(e.context()).find("ds/0/0/0") != std::string::npos);
  }
  auto wrong_ndim = header({1, 1, 1});
  wrong_ndim[3] = 2;
  wrong_ndim.push_back(0);
  CHECK_THROWS_AS(n5::decode_chunk(a, wrong_ndim), Error);
  auto short_payload = header({1, 1, 2});
  short_payload.push_back(0);
  CHECK_THROWS_AS(n5::decode_chunk(a, short_payload), Error);
}

TEST_CASE_TEMPLATE("chunk round trip", T, std::uint8_t, std::uint16_t, std::uint32_t, std::uint64_t, float,
                   double) {
  std::mt19937_64 rng(11);
  for (auto c : {Compression::raw, Compression::gzip}) {
    for (int i = 0; i < 10; ++i) {
      std::uniform_int_distribution<std::int64_t> s(1, 6);
      const Coord shape{s(rng), s(rng), s(rng)};
      const auto v = random_volume<T>(rng, Roi({0, 0, 0}, shape));
      const auto a = attrs_for(data_type_of<T>(), c, shape, shape);
      const auto bytes = n5::encode_chunk(a, shape, AnyVolume(v));
      CHECK(std::get<Volume<T>>(n5::decode_chunk(a, bytes)) == v);
    }
  }
}

TEST_CASE("attributes json") {
  DatasetAttributes a = attrs_for(DataType::f32, Compression::gzip, {10, 20, 30}, {4, 5, 6});
  const auto j = n5::to_json(a);
  CHECK(j["dimensions"] == nlohmann::json::array({30, 20, 10}));
  CHECK(j["blockSize"] == nlohmann::json::array({6, 5, 4}));
  CHECK(j["dataType"] == "float32");
  CHECK(j["compression"]["type"] == "gzip");
  CHECK(n5::attributes_from_json(j) == a);
  CHECK(n5::to_json(n5::attributes_from_json(j)).dump() == j.dump());
  auto legacy = j;
  legacy["compression"] = "raw";
  CHECK(n5::attributes_from_json(legacy).compression == Compression::raw);
  a.chunk_size = {0, 1, 1};
  CHECK_THROWS_AS(a.validate(), Error);
}

TEST_CASE("dataset read and write") {
  TempDir tmp;
  n5::Container c(tmp.path());
  std::mt19937_64 rng(5);

  SUBCASE("round trip all types and compressions") {
    int k = 0;
    for (auto comp : {Compression::raw, Compression::gzip}) {
      for (auto t : {DataType::u8, DataType::u16, DataType::u32, DataType::u64, DataType::f32, DataType::f64}) {
        const auto a = attrs_for(t, comp, {9, 10, 11}, {4, 3, 5});
        auto ds = c.create_dataset("rt" + std::to_string(k++), a);
        std::visit(
            [&](auto&& proto) {
              using V = std::decay_t<decltype(proto)>;
              using T = typename V::value_type;
              const auto v = random_volume<T>(rng, a.bounds());
              ds.write(v);
              CHECK(ds.template read<T>(a.bounds()) == v);
              auto reopened = n5::Dataset::open(ds.path());
              CHECK(reopened.attributes() == a);
              CHECK(reopened.template read<T>(a.bounds()) == v);
            },
            make_volume(t, Roi()));
      }
    }
  }

  SUBCASE("missing chunks and out of bounds read as fill") {
    auto ds = c.create_dataset("fill", attrs_for(DataType::u16, Compression::gzip, {8, 8, 8}, {4, 4, 4}));
    const auto v = ds.read<std::uint16_t>(Roi({-2, -2, -2}, {4, 4, 4}), 7);
    for (auto x : v.data()) CHECK(x == 7);
  }

  SUBCASE("boundary read matches in-memory read_region") {
    const auto a = attrs_for(DataType::u32, Compression::raw, {6, 7, 8}, {4, 4, 4});
    auto ds = c.create_dataset("edge", a);
    const auto v = random_volume<std::uint32_t>(rng, a.bounds());
    ds.write(v);
    for (int i = 0; i < 20; ++i) {
      std::uniform_int_distribution<std::int64_t> o(-5, 8), s(0, 9);
      const Roi r({o(rng), o(rng), o(rng)}, {s(rng), s(rng), s(rng)});
      CHECK(ds.read<std::uint32_t>(r, 3u) == read_region(v, r, 3u));
    }
  }

  SUBCASE("partial writes keep surrounding voxels") {
    const auto a = attrs_for(DataType::u8, Compression::gzip, {8, 8, 8}, {4, 4, 4});
    auto ds = c.create_dataset("partial", a);
    auto full = random_volume<std::uint8_t>(rng, a.bounds());
    ds.write(full);
    const auto patch = random_volume<std::uint8_t>(rng, Roi({1, 2, 3}, {3, 5, 2}));
    ds.write(patch);
    paste(full, patch);
    CHECK(ds.read<std::uint8_t>(a.bounds()) == full);
  }

  SUBCASE("truncated edge chunk header") {
    const auto a = attrs_for(DataType::u8, Compression::raw, {5, 6, 7}, {4, 4, 4});
    auto ds = c.create_dataset("trunc", a);
    ds.write(Volume<std::uint8_t>(a.bounds(), {}, 1));
    // grid (1, 1, 1) covers z 4..5, y 4..6, x 4..7 -> shape (1, 2, 3)
    const auto bytes = oracle::slurp(ds.chunk_path({1, 1, 1}));
    CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 16) == header({1, 2, 3}));
    CHECK(ds.chunk_path({1, 2, 3}) == ds.path() / "3" / "2" / "1");
  }

  SUBCASE("bounds and type errors") {
    auto ds = c.create_dataset("err", attrs_for(DataType::u8, Compression::raw, {4, 4, 4}, {2, 2, 2}));
    try {
      ds.write(Volume<std::uint8_t>(Roi({3, 0, 0}, {2, 1, 1})));
      FAIL("expected bounds error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::bounds);
    }
    CHECK_THROWS_AS(ds.write(Volume<float>(Roi({0, 0, 0}, {1, 1, 1}))), Error);
  }

  SUBCASE("corrupt chunk names the chunk") {
    auto ds = c.create_dataset("corrupt", attrs_for(DataType::u8, Compression::gzip, {4, 4, 4}, {2, 2, 2}));
    ds.write(Volume<std::uint8_t>(ds.bounds(), {}, 1));
    {
      std::ofstream out(ds.chunk_path({1, 0, 0}), std::ios::binary | std::ios::trunc);
      out << "garbage";
    }
    try {
      ds.read<std::uint8_t>(ds.bounds());
      FAIL("expected codec error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::codec);
      CHECK(std::string(e.context()).find("0/0/1") != std::string::npos);
    }
  }

  SUBCASE("parallel disjoint aligned writes match sequential") {
    const auto a = attrs_for(DataType::u16, Compression::gzip, {16, 16, 16}, {4, 8, 8});
    auto par = c.create_dataset("par", a);
    auto seq = c.create_dataset("seq", a);
    auto log = std::make_shared<n5::ChunkWriteLog>();
    par.set_write_log(log);
    std::vector<Volume<std::uint16_t>> parts;
    for (std::int64_t z = 0; z < 16; z += 4) parts.push_back(random_volume<std::uint16_t>(rng, Roi({z, 0, 0}, {4, 16, 16})));
    std::vector<std::thread> threads;
    for (const auto& p : parts) threads.emplace_back([&] { par.write(p); });
    for (auto& t : threads) t.join();
    for (const auto& p : parts) seq.write(p);
    CHECK(par.read<std::uint16_t>(a.bounds()) == seq.read<std::uint16_t>(a.bounds()));
    auto entries = log->entries();
    std::sort(entries.begin(), entries.end());
    CHECK(std::adjacent_find(entries.begin(), entries.end()) == entries.end());
    CHECK(entries.size() == 16);
  }

  SUBCASE("concurrent reads agree with sequential reads") {
    const auto a = attrs_for(DataType::f32, Compression::gzip, {12, 12, 12}, {5, 5, 5});
    auto ds = c.create_dataset("reads", a);
    const auto v = random_volume<float>(rng, a.bounds());
    ds.write(v);
    std::vector<Roi> rois;
    std::uniform_int_distribution<std::int64_t> o(-3, 10), s(1, 8);
    for (int i = 0; i < 32; ++i) rois.push_back(Roi({o(rng), o(rng), o(rng)}, {s(rng), s(rng), s(rng)}));
    std::vector<int> ok(rois.size(), 0);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < rois.size(); ++i)
      threads.emplace_back([&, i] { ok[i] = ds.read<float>(rois[i]) == read_region(v, rois[i]); });
    for (auto& t : threads) t.join();
    for (int x : ok) CHECK(x == 1);
  }

  SUBCASE("independent reader sees the same voxels") {
    for (auto comp : {Compression::raw, Compression::gzip}) {
      const auto a = attrs_for(DataType::u16, comp, {5, 9, 7}, {2, 4, 3});
      auto ds = c.create_dataset(comp == Compression::raw ? "ref_raw" : "ref_gz", a);
      const auto v = random_volume<std::uint16_t>(rng, a.bounds());
      ds.write(v);
      const auto r = oracle::read_n5(ds.path());
      CHECK(r.shape_zyx == std::vector<std::int64_t>{5, 9, 7});
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(r.values[i] == double(v.data()[i]));
    }
  }

  SUBCASE("voxel size attribute") {
    auto ds = c.create_dataset("vs", attrs_for(DataType::u8, Compression::raw));
    CHECK(ds.voxel_size() == VoxelSize{});
    ds.set_voxel_size(VoxelSize(8, 2, 1));
    CHECK(n5::Dataset::open(ds.path()).voxel_size() == VoxelSize(8, 2, 1));
    CHECK(c.has_dataset("vs"));
    CHECK_FALSE(c.has_dataset("nope"));
  }
}
