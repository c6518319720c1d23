#include <atomic>
#include <fstream>
#include <random>

#include "doctest.h"

#include "cleftkit/inference.hpp"
#include "cleftkit/predictors.hpp"
#include "tempdir.hpp"

using namespace cleftkit;

namespace {

FloatVolume random_float(std::uint64_t seed, const Roi& r) {
  std::mt19937_64 gen(seed);
  FloatVolume v(r);
  for (auto& x : v.data()) x = std::uniform_real_distribution<float>(0, 1)(gen);
  return v;
}

n5::DatasetAttributes f32_attrs(Coord dims, Coord chunk) {
  n5::DatasetAttributes a;
  a.dimensions = dims;
  a.chunk_size = chunk;
  a.data_type = DataType::f32;
  return a;
}

class WrongShape final : public Predictor {
 public:
  PredictorContract contract() const override { return {}; }
  std::vector<AnyVolume> predict(const AnyVolume&, const Roi& r) const override {
    return {FloatVolume(Roi(r.offset, {1, 1, 1}))};
  }
};

class FailingSource final : public BlockSource {
 public:
  DataType data_type() const override { return DataType::f32; }
  AnyVolume read(const Roi& r, double) const override {
    if (r.offset[0] >= 8) throw Error(ErrorCode::io, "disk on fire");
    return FloatVolume(r);
  }
};

}  // namespace

TEST_CASE("plan tiling") {
  const auto p = plan_blocks(Roi({0, 0, 0}, {100, 100, 100}), {50, 50, 50}, {1, 2, 3});
  CHECK(p.size() == 8);
  for (const auto& b : p) {
    CHECK(b.masked_in);
    CHECK(b.input_roi == roi_grow(b.output_roi, {1, 2, 3}));
  }
  const auto q = plan_blocks(Roi({0, 0, 0}, {100, 100, 100}), {40, 40, 40}, {0, 0, 0});
  CHECK(q.size() == 27);
  CHECK(q.back().output_roi == Roi({80, 80, 80}, {20, 20, 20}));
  CHECK(q[1].output_roi.offset == Coord{0, 0, 40});  // x fastest: z-major order

  // disjoint cover by voxel counting
  const Roi total({-3, 5, 7}, {17, 23, 11});
  const auto r = plan_blocks(total, {4, 5, 6}, {0, 0, 0});
  std::vector<int> hits(std::size_t(total.size()), 0);
  for (const auto& b : r) {
    CHECK(total.contains(b.output_roi));
    for (auto z = b.output_roi.offset[0]; z < b.output_roi.end()[0]; ++z)
      for (auto y = b.output_roi.offset[1]; y < b.output_roi.end()[1]; ++y)
        for (auto x = b.output_roi.offset[2]; x < b.output_roi.end()[2]; ++x)
          ++hits[std::size_t(((z - total.offset[0]) * total.shape[1] + (y - total.offset[1])) * total.shape[2] +
                             (x - total.offset[2]))];
  }
  for (int h : hits) CHECK(h == 1);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i].block_id == std::int64_t(i));

  CHECK_THROWS_AS(plan_blocks(total, {0, 1, 1}, {0, 0, 0}), Error);
}

TEST_CASE("plan masking against a per-voxel footprint oracle") {
  const Coord factors{13, 128, 128};
  const Roi total({0, 0, 0}, {104, 1024, 1024});
  BlockMask m{LabelVolume(Roi({0, 0, 0}, {8, 8, 8})), factors};
  for (std::int64_t z = 0; z < 4; ++z)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t x = 0; x < 4; ++x) m.mask(z, y, x) = 1;
  for (const Coord block : {Coord{20, 300, 300}, Coord{13, 128, 128}, Coord{50, 700, 450}}) {
    const auto plans = plan_blocks(total, block, {0, 0, 0}, &m);
    int masked = 0;
    for (const auto& p : plans) {
      bool any = false;
      for (auto z = p.output_roi.offset[0]; z < p.output_roi.end()[0] && !any; ++z)
        for (auto y = p.output_roi.offset[1]; y < p.output_roi.end()[1] && !any; y += 1)
          for (auto x = p.output_roi.offset[2]; x < p.output_roi.end()[2] && !any; x += 1) {
            const Coord c{z / factors[0], y / factors[1], x / factors[2]};
            any = m.mask.roi().contains(c) && m.mask.at(c);
          }
      CHECK(p.masked_in == any);
      masked += p.masked_in;
    }
    CHECK(masked > 0);
    CHECK(masked < int(plans.size()));
  }
}

TEST_CASE("partition") {
  auto plans = plan_blocks(Roi({0, 0, 0}, {10, 10, 10}), {3, 3, 3}, {0, 0, 0});
  plans[5].masked_in = false;
  std::vector<std::int64_t> seen;
  for (int part = 0; part < 7; ++part)
    for (const auto& p : partition_plans(plans, 7, part)) seen.push_back(p.block_id);
  CHECK(seen.size() == plans.size() - 1);
  CHECK(std::is_sorted(seen.begin(), seen.end()));
  CHECK_THROWS_AS(partition_plans(plans, 3, 3), Error);
}

TEST_CASE("identity run copies the input") {
  const Roi r({0, 0, 0}, {20, 24, 28});
  const auto v = random_float(1, r);
  MemorySource src(v);
  MemorySink sink{FloatVolume(r)};
  const auto plans = plan_blocks(r, {7, 8, 9}, {0, 0, 0});
  const auto rep = run(plans, IdentityPredictor(), src, {&sink}, RunOptions{3});
  CHECK(std::get<FloatVolume>(sink.volume()) == v);
  CHECK(rep.blocks_done == std::int64_t(plans.size()));
  CHECK(rep.voxels_written == r.size());
  CHECK(rep.worker_utilization.size() == 3);
}

TEST_CASE("masked-out blocks are untouched") {
  const Roi r({0, 0, 0}, {8, 8, 8});
  auto plans = plan_blocks(r, {4, 4, 4}, {0, 0, 0});
  for (auto& p : plans) p.masked_in = false;
  MemorySource src(random_float(2, r));
  MemorySink sink(FloatVolume(r, {}, -1.0f));
  const auto rep = run(plans, IdentityPredictor(), src, {&sink});
  CHECK(rep.blocks_skipped == std::int64_t(plans.size()));
  CHECK(rep.voxels_written == 0);
  for (auto x : std::get<FloatVolume>(sink.volume()).data()) CHECK(x == -1.0f);
}

TEST_CASE("stencil output is independent of block shape and workers") {
  const Roi r({0, 0, 0}, {24, 24, 24});
  const auto v = random_float(3, r);
  for (const auto& stencil : {StencilPredictor::box({1, 2, 3}), StencilPredictor::gaussian({0.7, 1.0, 1.3})}) {
    const auto whole = stencil.apply(v);
    for (const Coord block : {Coord{5, 7, 9}, Coord{8, 8, 8}, Coord{24, 24, 24}}) {
      for (int workers : {1, 3}) {
        MemorySource src(v);
        MemorySink sink{FloatVolume(r)};
        run(plan_blocks(r, block, stencil.contract().context), stencil, src, {&sink}, RunOptions{workers});
        CHECK(std::get<FloatVolume>(sink.volume()) == whole);
      }
    }
  }
}

TEST_CASE("errors carry the block id") {
  const Roi r({0, 0, 0}, {16, 4, 4});
  const auto plans = plan_blocks(r, {4, 4, 4}, {0, 0, 0});
  MemorySink sink{FloatVolume(r)};
  try {
    run(plans, WrongShape(), MemorySource(FloatVolume(r)), {&sink});
    FAIL("expected contract error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::contract);
    CHECK(std::string(e.context()).find("block_id=") != std::string::npos);
  }
  try {
    run(plans, IdentityPredictor(), FailingSource(), {&sink}, RunOptions{2});
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
    const std::string ctx = e.context();
    CHECK((ctx.find("block_id=2") != std::string::npos || ctx.find("block_id=3") != std::string::npos));
  }
  MemorySink wrong{Volume<std::uint8_t>(r)};
  CHECK_THROWS_AS(run(plans, IdentityPredictor(), MemorySource(FloatVolume(r)), {&wrong}), Error);
  CHECK_THROWS_AS(run(plans, IdentityPredictor(), MemorySource(FloatVolume(r)), {}), Error);
}

TEST_CASE("input types are converted to the contract") {
  const Roi r({0, 0, 0}, {4, 4, 4});
  Volume<std::uint8_t> raw(r, {}, 200);
  MemorySink sink{FloatVolume(r)};
  run(plan_blocks(r, {2, 2, 2}, {0, 0, 0}), IdentityPredictor(), MemorySource(raw), {&sink});
  for (auto x : std::get<FloatVolume>(sink.volume()).data()) CHECK(x == 200.0f);
}

TEST_CASE("journal and resume") {
  TempDir tmp;
  SUBCASE("journal file") {
    Journal j(tmp / "j.log");
    CHECK(j.completed().empty());
    j.append(3);
    j.append(11);
    {
      std::ofstream torn(tmp / "j.log", std::ios::app);
      torn << "4";
    }
    CHECK(j.completed() == std::set<std::int64_t>{3, 11});
  }
  SUBCASE("interrupted run resumes to the same dataset") {
    n5::Container c(tmp.path());
    const Roi r({0, 0, 0}, {16, 16, 16});
    const auto v = random_float(4, r);
    auto in = c.create_dataset("in", f32_attrs(r.shape, {8, 8, 8}));
    in.write(v);
    auto full = c.create_dataset("full", f32_attrs(r.shape, {4, 4, 4}));
    auto resumed = c.create_dataset("resumed", f32_attrs(r.shape, {4, 4, 4}));
    const auto stencil = StencilPredictor::box({1, 1, 1});
    const auto plans = plan_blocks(r, {4, 4, 4}, {1, 1, 1});
    DatasetSource src(in);
    DatasetSink full_sink(full), resumed_sink(resumed);
    run(plans, stencil, src, {&full_sink}, RunOptions{2});

    Journal journal(tmp / "resume.log");
    RunOptions first{2};
    first.journal = &journal;
    first.stop_after = 23;
    const auto a = run(plans, stencil, src, {&resumed_sink}, first);
    CHECK(a.blocks_done == 23);
    CHECK(journal.completed().size() == 23);
    RunOptions second{3};
    second.journal = &journal;
    const auto b = run(plans, stencil, src, {&resumed_sink}, second);
    CHECK(b.blocks_resumed == 23);
    CHECK(b.blocks_done == std::int64_t(plans.size()) - 23);
    CHECK(resumed.read<float>(r) == full.read<float>(r));
  }
}

TEST_CASE("workers never write the same chunk") {
  TempDir tmp;
  n5::Container c(tmp.path());
  const Roi r({0, 0, 0}, {16, 32, 32});
  auto out = c.create_dataset("out", f32_attrs(r.shape, {4, 8, 8}));
  auto log = std::make_shared<n5::ChunkWriteLog>();
  out.set_write_log(log);
  DatasetSink sink(out);
  run(plan_blocks(r, {8, 16, 16}, {0, 0, 0}), IdentityPredictor(), MemorySource(random_float(5, r)), {&sink},
      RunOptions{4});
  auto e = log->entries();
  std::sort(e.begin(), e.end());
  CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
  CHECK(e.size() == 4 * 4 * 4);
}

TEST_CASE("pipeline overlaps io and prediction") {
  const Roi r({0, 0, 0}, {40, 4, 4});
  const auto plans = plan_blocks(r, {1, 4, 4}, {0, 0, 0});
  MemorySource mem{FloatVolume(r)};
  MemorySink mem_sink{FloatVolume(r)};
  DelayedSource src(mem, std::chrono::milliseconds(2));
  DelayedSink sink(mem_sink, std::chrono::milliseconds(2));
  const auto rep = run(plans, FixedDelayPredictor(std::chrono::milliseconds(10)), src, {&sink}, RunOptions{2});
  // serial execution would need 40 * 14 ms / 2 workers = 280 ms
  CHECK(rep.wall_seconds < 0.26);
  CHECK(rep.mean_utilization() > 0.8);
}

TEST_CASE("eta") {
  CHECK(eta_seconds(1, 1, 1) == 1.0);
  CHECK(eta_seconds(50e12, 48, 3e6) == doctest::Approx(347222.2222).epsilon(1e-9));
  CHECK(eta_seconds(1e9, 8, 1e6) == eta_seconds(1e9, 4, 1e6) / 2);
  CHECK_THROWS_AS(eta_seconds(1, 0, 1), Error);
}

TEST_CASE("predictor factory and oracle predictor") {
  CHECK(make_predictor("identity", {1, 1, 1}, DataType::u8)->contract().context == Coord{1, 1, 1});
  CHECK(make_predictor("gaussian", {3, 3, 3}, DataType::f32)->contract().context == Coord{3, 3, 3});
  CHECK_THROWS_AS(make_predictor("resnet", {0, 0, 0}, DataType::f32), Error);

  const Roi r({0, 0, 0}, {6, 10, 10});
  LabelVolume truth(r);
  for (std::int64_t y = 3; y < 6; ++y) truth(3, y, 4) = 1;
  auto src = std::make_shared<MemorySource>(truth);
  StdtOraclePredictor p(src, {2, 4, 4}, {});
  MemorySink sink{FloatVolume(r)};
  run(plan_blocks(r, {3, 5, 5}, {2, 4, 4}), p, MemorySource(Volume<std::uint8_t>(r)), {&sink}, RunOptions{2});
  const auto& out = std::get<FloatVolume>(sink.volume());
  for (std::size_t i = 0; i < truth.size(); ++i) CHECK((out.data()[i] > 0) == (truth.data()[i] == 1));
}
