#pragma once

// Blockwise prediction over large volumes.
//
// Output blocks tile the requested roi without overlap; each block's input is
// the output roi grown by the predictor's context, so neighbouring inputs
// overlap. A predictor that honours its context produces the same voxels
// whatever the block shape or worker count.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cleftkit/n5.hpp"
#include "cleftkit/volume.hpp"

namespace cleftkit {

struct BlockPlan {
  std::int64_t block_id = 0;
  Roi output_roi;
  Roi input_roi;
  bool masked_in = true;

  friend bool operator==(const BlockPlan&, const BlockPlan&) = default;
};

// A low-resolution binary mask; mask voxel c covers full-resolution voxels
// [c * factors, (c + 1) * factors).
struct BlockMask {
  LabelVolume mask;
  Coord factors{1, 1, 1};
};

// Adjacent output blocks tiling `total` in z-major order (edge blocks
// truncated). A block is masked in when any mask voxel under its footprint is
// positive; without a mask every block is.
std::vector<BlockPlan> plan_blocks(const Roi& total, const Coord& output_block_shape, const Coord& context,
                                   const BlockMask* mask = nullptr);

// Contiguous slice `part` of `n_parts` of the masked-in plans, for static
// distribution over machines.
std::vector<BlockPlan> partition_plans(const std::vector<BlockPlan>& plans, int n_parts, int part);

struct PredictorContract {
  Coord context{0, 0, 0};
  DataType input_type = DataType::f32;
  DataType output_type = DataType::f32;
  int channels = 1;
};

// A deterministic function from an input block (input roi, boundary filled)
// to one output volume per channel, each covering exactly `output_roi`.
// Implementations must be safe to call from several threads at once.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictorContract contract() const = 0;
  virtual std::vector<AnyVolume> predict(const AnyVolume& input, const Roi& output_roi) const = 0;
};

// Where blocks are read from and written to. Sources must allow concurrent
// reads; sinks must allow concurrent writes of disjoint output rois.
class BlockSource {
 public:
  virtual ~BlockSource() = default;
  virtual DataType data_type() const = 0;
  virtual AnyVolume read(const Roi& r, double fill) const = 0;
};

class BlockSink {
 public:
  virtual ~BlockSink() = default;
  virtual DataType data_type() const = 0;
  virtual void write(const AnyVolume& v) = 0;
};

class DatasetSource final : public BlockSource {
 public:
  explicit DatasetSource(n5::Dataset ds) : ds_(std::move(ds)) {}
  DataType data_type() const override { return ds_.data_type(); }
  AnyVolume read(const Roi& r, double fill) const override { return ds_.read_roi(r, fill); }

 private:
  n5::Dataset ds_;
};

class DatasetSink final : public BlockSink {
 public:
  explicit DatasetSink(n5::Dataset ds) : ds_(std::move(ds)) {}
  DataType data_type() const override { return ds_.data_type(); }
  void write(const AnyVolume& v) override { ds_.write_roi(v); }

 private:
  n5::Dataset ds_;
};

class MemorySource final : public BlockSource {
 public:
  explicit MemorySource(AnyVolume v) : v_(std::move(v)) {}
  DataType data_type() const override { return cleftkit::data_type(v_); }
  AnyVolume read(const Roi& r, double fill) const override { return read_region(v_, r, fill); }

 private:
  AnyVolume v_;
};

// Writes into a preallocated volume; disjoint writes may run concurrently.
class MemorySink final : public BlockSink {
 public:
  explicit MemorySink(AnyVolume v) : v_(std::move(v)) {}
  DataType data_type() const override { return cleftkit::data_type(v_); }
  void write(const AnyVolume& v) override;
  const AnyVolume& volume() const { return v_; }

 private:
  AnyVolume v_;
};

// Adds fixed latency to every read or write; used to model I/O cost.
class DelayedSource final : public BlockSource {
 public:
  DelayedSource(const BlockSource& inner, std::chrono::microseconds delay) : inner_(inner), delay_(delay) {}
  DataType data_type() const override { return inner_.data_type(); }
  AnyVolume read(const Roi& r, double fill) const override;

 private:
  const BlockSource& inner_;
  std::chrono::microseconds delay_;
};

class DelayedSink final : public BlockSink {
 public:
  DelayedSink(BlockSink& inner, std::chrono::microseconds delay) : inner_(inner), delay_(delay) {}
  DataType data_type() const override { return inner_.data_type(); }
  void write(const AnyVolume& v) override;

 private:
  BlockSink& inner_;
  std::chrono::microseconds delay_;
};

// Newline-delimited ids of completed blocks. Appends are atomic per record; a
// torn trailing record (no newline) is ignored when loading.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  const std::filesystem::path& path() const { return path_; }
  std::set<std::int64_t> completed() const;
  void append(std::int64_t block_id);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

struct RunOptions {
  int workers = 1;
  // Blocks read ahead per worker while the predictor is busy.
  int prefetch = 2;
  double fill = 0.0;
  Journal* journal = nullptr;
  // Hand out at most this many blocks in this run; the run then finishes
  // the claimed ones and returns (simulates an interrupted job).
  std::optional<std::int64_t> stop_after;
};

struct RunReport {
  std::int64_t blocks_done = 0;
  std::int64_t blocks_skipped = 0;   // masked out
  std::int64_t blocks_resumed = 0;   // already in the journal
  std::int64_t voxels_written = 0;
  double wall_seconds = 0.0;
  double voxels_per_second = 0.0;
  // Fraction of the run each worker's predictor was busy.
  std::vector<double> worker_utilization;

  double mean_utilization() const;
};

// Runs every masked-in plan through `predictor`: read input_roi (with
// `fill` outside the source), predict, write each channel to its sink.
// Each worker overlaps reading, prediction and writing of consecutive
// blocks. Errors carry the failing block id in their context.
RunReport run(const std::vector<BlockPlan>& plans, const Predictor& predictor, const BlockSource& input,
              const std::vector<BlockSink*>& outputs, const RunOptions& options = {});

// Seconds to process `total_voxels` on `workers` workers at the given rate.
double eta_seconds(double total_voxels, int workers, double voxels_per_second_per_worker);

}  // namespace cleftkit
