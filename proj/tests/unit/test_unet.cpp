#include <random>

#include "doctest.h"

#include "cleftkit/unet.hpp"
#include "oracles.hpp"

using namespace cleftkit;

namespace {

ArchSpec single_conv() {
  ArchSpec a;
  a.levels.push_back({{{3, 3, 3}}, std::nullopt, std::nullopt, 0});
  return a;
}

ArchSpec two_level() {
  ArchSpec a;
  a.levels.push_back({{{1, 3, 3}, {1, 3, 3}}, Coord{1, 2, 2}, std::nullopt, 0});
  a.levels.push_back({{{3, 3, 3}, {3, 3, 3}}, std::nullopt, std::nullopt, 0});
  return a;
}

}  // namespace

TEST_CASE("valid output shape") {
  CHECK(valid_output_shape(single_conv(), {10, 10, 10}) == Coord{8, 8, 8});
  CHECK(valid_output_shape(ArchSpec{}, {7, 8, 9}) == Coord{7, 8, 9});

  const auto a = two_level();
  for (std::int64_t z = 5; z < 15; ++z) {
    for (std::int64_t xy = 8; xy < 30; ++xy) {
      const Coord in{z, xy, xy};
      const auto want = oracle::simulate(a, in);
      if (want) {
        CHECK(valid_output_shape(a, in) == *want);
      } else {
        CHECK_THROWS_AS(valid_output_shape(a, in), Error);
      }
    }
  }
}

TEST_CASE("valid output shape errors name layer and axis") {
  try {
    valid_output_shape(two_level(), {9, 21, 20});  // y: 21 - 4 = 17 is odd
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape);
    CHECK(std::string(e.context()) == "enc0.pool:y");
  }
  try {
    valid_output_shape(single_conv(), {2, 10, 10});
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(std::string(e.context()) == "bottom.conv0:z");
  }
}

TEST_CASE("required input shape") {
  CHECK(required_input_shape(single_conv(), {8, 8, 8}) == Coord{10, 10, 10});
  CHECK(required_input_shape(ArchSpec{}, {1, 1, 1}) == Coord{1, 1, 1});
  CHECK(context_per_side(single_conv(), {5, 6, 7}) == Coord{1, 1, 1});
  CHECK(context_per_side(ArchSpec{}, {5, 6, 7}) == Coord{0, 0, 0});

  ArchSpec even;
  even.levels.push_back({{{2, 2, 2}}, std::nullopt, std::nullopt, 0});
  try {
    context_per_side(even, {4, 4, 4});
    FAIL("expected asymmetric context");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::asymmetric_context);
  }
}

TEST_CASE("round trip against the simulation oracle") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<std::int64_t> d(1, 40);
  for (int i = 0; i < 300; ++i) {
    const auto a = oracle::random_arch(rng);
    const Coord want{d(rng), d(rng), d(rng)};
    const Coord in = required_input_shape(a, want);
    const auto out = oracle::simulate(a, in);
    REQUIRE(out.has_value());
    CHECK(valid_output_shape(a, in) == *out);
    for (int ax = 0; ax < 3; ++ax) {
      CHECK((*out)[ax] >= want[ax]);
      CHECK(in[ax] == oracle::minimal_input_axis(a, ax, want[ax], in[ax]));
    }
    const bool symmetric = (in[0] - (*out)[0]) % 2 == 0 && (in[1] - (*out)[1]) % 2 == 0 && (in[2] - (*out)[2]) % 2 == 0;
    if (*out == want && symmetric) {
      const auto c = context_per_side(a, want);
      for (int ax = 0; ax < 3; ++ax) CHECK(2 * c[ax] + want[ax] == in[ax]);
    }
  }
}

TEST_CASE("presets reproduce the published output sizes") {
  const auto dtu1 = arch_preset("dtu1-like");
  const auto dtu2 = arch_preset("dtu2-like");
  CHECK(valid_output_shape(dtu1, required_input_shape(dtu1, {56, 56, 56})) == Coord{56, 56, 56});
  CHECK(valid_output_shape(dtu2, required_input_shape(dtu2, {23, 218, 218})) == Coord{23, 218, 218});
  CHECK(valid_output_shape(dtu2, required_input_shape(dtu2, {71, 650, 650})) == Coord{71, 650, 650});
  CHECK(*dtu2.production_output_shape == Coord{71, 650, 650});
  CHECK(context_per_side(dtu2, {23, 218, 218}) == Coord{10, 106, 106});
  CHECK(context_per_side(dtu2, {71, 650, 650}) == Coord{10, 106, 106});
  CHECK(context_per_side(dtu1, {56, 56, 56}) == Coord{16, 106, 106});
  CHECK_THROWS_AS(arch_preset("dtu3"), Error);
  CHECK(ArchSpec::from_json(dtu2.to_json()).to_json() == dtu2.to_json());
}

TEST_CASE("physical fov") {
  const auto r = physical_fov(single_conv(), {40, 4, 4});
  REQUIRE(r.layers.size() == 1);
  CHECK(r.layers[0].voxel_fov == Coord{3, 3, 3});
  CHECK(r.layers[0].physical_nm == std::array<double, 3>{120, 12, 12});
  CHECK(r.layers[0].isotropy == 10.0);

  ArchSpec flat;
  flat.levels.push_back({{{1, 3, 3}}, std::nullopt, std::nullopt, 0});
  CHECK(physical_fov(flat, {40, 4, 4}).layers[0].isotropy == doctest::Approx(40.0 / 12.0));
}

TEST_CASE("physical fov equals the phase-averaged impulse support") {
  std::mt19937_64 rng(42);
  std::vector<ArchSpec> specs{arch_preset("dtu1-like"), arch_preset("dtu2-like"), two_level()};
  for (int i = 0; i < 100; ++i) specs.push_back(oracle::random_arch(rng));
  for (const auto& a : specs) {
    const auto report = physical_fov(a, {40, 4, 4});
    const auto impulse = oracle::impulse_fov(a);
    REQUIRE(report.layers.size() == impulse.size());
    for (std::size_t l = 0; l < impulse.size(); ++l)
      for (int ax = 0; ax < 3; ++ax) CHECK(double(report.layers[l].voxel_fov[ax]) == impulse[l][ax]);
  }
}

TEST_CASE("dtu2-like is at least as isotropic as dtu1-like at every layer") {
  const auto a = physical_fov(arch_preset("dtu1-like"), {40, 4, 4});
  const auto b = physical_fov(arch_preset("dtu2-like"), {40, 4, 4});
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].name == b.layers[l].name);
    CHECK(b.layers[l].isotropy <= a.layers[l].isotropy);
  }
}

TEST_CASE("outputs depend only on the input window") {
  // Every output unit's impulse support lies within [p, p + 2 * context] and
  // together they reach both ends of the required input.
  std::mt19937_64 rng(43);
  for (int i = 0; i < 100; ++i) {
    const auto a = oracle::random_arch(rng);
    const Coord out{7, 9, 11};
    const Coord in = required_input_shape(a, out);
    const auto sim = oracle::simulate(a, in);
    REQUIRE(sim);
    const auto layers = oracle::unroll(a);
    for (int ax = 0; ax < 3; ++ax) {
      std::int64_t lo = 1 << 30, hi = -1;
      for (std::int64_t p = 0; p < (*sim)[ax]; ++p) {
        const auto [s, e] = oracle::support(layers, layers.size(), ax, p);
        CHECK(s >= 0);
        CHECK(e < in[ax]);
        lo = std::min(lo, s);
        hi = std::max(hi, e);
      }
      CHECK(lo == 0);
      CHECK(hi == in[ax] - 1);
    }
  }
}

TEST_CASE("arch json") {
  const auto j = nlohmann::json::parse(R"({"levels": [{"convs": [[1,3,3]], "down": [1,2,2]}, {"convs": [[3,3,3]]}],
                                           "decoder_convs": [[[1,1,1]]]})");
  const auto a = ArchSpec::from_json(j);
  CHECK(a.decoder_convs(0) == std::vector<Coord>{{1, 1, 1}});
  CHECK_THROWS_AS(ArchSpec::from_json(nlohmann::json::parse(R"({"levels": [{"convs": [[0,3,3]]}]})")), Error);
  CHECK_THROWS_AS(ArchSpec::from_json(nlohmann::json::parse(R"({"levels": [{"convs": [], "down": [1,2,2]}]})")), Error);
}

TEST_CASE("shipped arch configs match the presets") {
  for (const auto& name : arch_preset_names()) {
    const auto a = load_arch(std::string(CLEFTKIT_SOURCE_DIR) + "/configs/" + name + ".json");
    CHECK(a.to_json() == arch_preset(name).to_json());
  }
}
