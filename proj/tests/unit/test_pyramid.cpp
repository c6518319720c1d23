#include <random>

#include "doctest.h"

#include "cleftkit/n5.hpp"
#include "cleftkit/pyramid.hpp"
#include "tempdir.hpp"

using namespace cleftkit;

namespace {

FloatVolume random_float(std::uint64_t seed, const Roi& r) {
  std::mt19937_64 gen(seed);
  FloatVolume v(r);
  for (auto& x : v.data()) x = std::uniform_real_distribution<float>(0, 1)(gen);
  return v;
}

double mean(const FloatVolume& v) {
  double s = 0;
  for (float x : v.data()) s += x;
  return s / double(v.size());
}

}  // namespace

TEST_CASE("downscale") {
  CHECK(downscaled_roi(Roi({0, 0, 0}, {10, 10, 10}), {3, 4, 5}) == Roi({0, 0, 0}, {4, 3, 2}));
  CHECK(downscaled_roi(Roi({-1, 5, 7}, {2, 3, 1}), {2, 2, 2}) == Roi({-1, 2, 3}, {2, 2, 1}));

  const FloatVolume flat(Roi({0, 0, 0}, {7, 9, 11}), {}, 0.3f);
  for (auto x : downscale(flat, {2, 3, 4}).data()) CHECK(x == doctest::Approx(0.3f));

  Volume<std::uint8_t> cube(Roi({0, 0, 0}, {2, 2, 2}));
  for (std::size_t i = 0; i < 8; ++i) cube.data()[i] = std::uint8_t(i);
  const auto one = downscale(cube, {2, 2, 2});
  CHECK(one.size() == 1);
  CHECK(one.data()[0] == 3.5f);

  const auto level7 = downscale(FloatVolume(Roi({0, 0, 0}, {13, 128, 128})), {13, 128, 128});
  CHECK(level7.voxel_size() == VoxelSize(520, 512, 512));

  // edge cells average only in-bounds voxels
  Volume<std::uint16_t> edge(Roi({0, 0, 0}, {1, 1, 3}), {}, std::vector<std::uint16_t>{2, 4, 9});
  const auto e = downscale(edge, {1, 1, 2});
  CHECK(e(0, 0, 0) == 3.0f);
  CHECK(e(0, 0, 1) == 9.0f);

  CHECK_THROWS_AS(downscale(flat, {0, 1, 1}), Error);
}

TEST_CASE("downscale associativity and mass") {
  const auto v = random_float(1, Roi({0, 0, 0}, {12, 24, 36}));
  const Coord f1{2, 3, 4}, f2{3, 2, 3};
  const auto two_step = downscale(downscale(v, f1), f2);
  const auto one_step = downscale(v, {6, 6, 12});
  REQUIRE(two_step.roi() == one_step.roi());
  for (std::size_t i = 0; i < one_step.size(); ++i) CHECK(std::abs(two_step.data()[i] - one_step.data()[i]) <= 1e-6);
  CHECK(std::abs(mean(downscale(v, f1)) - mean(v)) <= 1e-6);
}

TEST_CASE("majority downscale") {
  Volume<std::uint8_t> v(Roi({0, 0, 0}, {1, 2, 2}), {}, std::vector<std::uint8_t>{3, 3, 1, 2});
  CHECK(downscale_majority(v, {1, 2, 2}).data()[0] == 3);
  Volume<std::uint8_t> tie(Roi({0, 0, 0}, {1, 1, 2}), {}, std::vector<std::uint8_t>{5, 2});
  CHECK(downscale_majority(tie, {1, 1, 2}).data()[0] == 2);
}

TEST_CASE("mask") {
  const auto v = random_float(2, Roi({0, 0, 0}, {4, 8, 8}));
  for (auto x : build_mask(v, 0.0, 1.0).data()) CHECK(x == 1);
  for (auto x : build_mask(v, 2.0, 3.0).data()) CHECK(x == 0);
  const auto narrow = build_mask(v, 0.3, 0.6);
  const auto wide = build_mask(v, 0.2, 0.7);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(wide.data()[i] >= narrow.data()[i]);

  // phantom: 20% of the z-sections are sample
  FloatVolume phantom(Roi({0, 0, 0}, {50, 16, 16}), {}, 0.05f);
  for (std::int64_t z = 10; z < 20; ++z)
    for (std::int64_t y = 0; y < 16; ++y)
      for (std::int64_t x = 0; x < 16; ++x) phantom(z, y, x) = 0.6f;
  const auto m = build_mask(phantom, 0.3, 1.0);
  double frac = 0;
  for (auto x : m.data()) frac += x;
  frac /= double(m.size());
  CHECK(std::abs(frac - 0.2) <= 0.01);
}

TEST_CASE("pyramid datasets") {
  TempDir tmp;
  n5::Container c(tmp.path());
  const Roi r({0, 0, 0}, {10, 33, 40});
  n5::DatasetAttributes a;
  a.dimensions = r.shape;
  a.chunk_size = {4, 16, 16};
  a.data_type = DataType::u16;
  auto s0 = c.create_dataset("raw/s0", a);
  s0.set_voxel_size({40, 4, 4});
  Volume<std::uint16_t> v(r);
  std::mt19937_64 gen(3);
  for (auto& x : v.data()) x = std::uint16_t(gen() % 1000);
  s0.write(v);

  const auto levels = build_pyramid(c, "raw/s0", {{1, 2, 2}, {2, 2, 2}}, 3, {4, 8, 8});
  REQUIRE(levels.size() == 3);
  CHECK(levels[1].dataset == "raw/s1");
  CHECK(levels[2].factors == Coord{2, 4, 4});

  const auto s1 = c.open_dataset("raw/s1");
  const auto s2 = c.open_dataset("raw/s2");
  CHECK(s1.voxel_size() == VoxelSize(40, 8, 8));
  CHECK(s2.voxel_size() == VoxelSize(80, 16, 16));
  CHECK(s2.extra_attributes()["downsamplingFactors"] == nlohmann::json::array({4, 4, 2}));
  const auto l1 = downscale(v, {1, 2, 2});
  CHECK(s1.bounds() == l1.roi());
  CHECK(s1.read<float>(s1.bounds()) == l1);
  const auto l2 = downscale(l1, {2, 2, 2});
  CHECK(s2.read<float>(s2.bounds()) == l2);
}
