#include "cleftkit/inference.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace cleftkit {

namespace {

using Clock = std::chrono::steady_clock;

// Bounded FIFO handing items between the stages of one worker.
template <class T>
class Channel {
 public:
  explicit Channel(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  void push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct InFlight {
  const BlockPlan* plan = nullptr;
  AnyVolume input;
  std::vector<AnyVolume> outputs;
};

std::string block_context(std::int64_t id) { return "block_id=" + std::to_string(id); }

Error annotate(std::int64_t block_id, const std::exception& e, ErrorCode fallback) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    std::string ctx = block_context(block_id);
    if (!err->context().empty()) ctx += " " + err->context();
    return Error(err->code(), "block " + std::to_string(block_id) + ": " + err->what(), ctx);
  }
  return Error(fallback, "block " + std::to_string(block_id) + ": " + e.what(), block_context(block_id));
}

class FirstError {
 public:
  void set(Error e) {
    std::lock_guard lock(mutex_);
    if (!error_) error_ = std::move(e);
    failed_.store(true);
  }
  bool failed() const { return failed_.load(); }
  void rethrow() const {
    if (error_) throw *error_;
  }

 private:
  std::mutex mutex_;
  std::optional<Error> error_;
  std::atomic<bool> failed_{false};
};

}  // namespace

std::vector<BlockPlan> plan_blocks(const Roi& total, const Coord& output_block_shape, const Coord& context,
                                   const BlockMask* mask) {
  for (int a = 0; a < 3; ++a) {
    if (output_block_shape[a] < 1) {
      throw Error(ErrorCode::config, "output block shape must be positive", to_string(output_block_shape));
    }
    if (mask && mask->factors[a] < 1) throw Error(ErrorCode::config, "mask factors must be >= 1", to_string(mask->factors));
  }
  std::vector<BlockPlan> plans;
  if (total.empty()) return plans;
  Coord n{};
  for (int a = 0; a < 3; ++a) n[a] = ceil_div(total.shape[a], output_block_shape[a]);
  plans.reserve(static_cast<std::size_t>(n[0] * n[1] * n[2]));
  std::int64_t id = 0;
  for (std::int64_t bz = 0; bz < n[0]; ++bz) {
    for (std::int64_t by = 0; by < n[1]; ++by) {
      for (std::int64_t bx = 0; bx < n[2]; ++bx) {
        const Coord g{bz, by, bx};
        BlockPlan p;
        p.block_id = id++;
        for (int a = 0; a < 3; ++a) {
          p.output_roi.offset[a] = total.offset[a] + g[a] * output_block_shape[a];
          p.output_roi.shape[a] = std::min(output_block_shape[a], total.end()[a] - p.output_roi.offset[a]);
        }
        p.input_roi = roi_grow(p.output_roi, context);
        if (mask) {
          Roi footprint;
          for (int a = 0; a < 3; ++a) {
            const auto lo = floor_div(p.output_roi.offset[a], mask->factors[a]);
            const auto hi = floor_div(p.output_roi.end()[a] - 1, mask->factors[a]);
            footprint.offset[a] = lo;
            footprint.shape[a] = hi - lo + 1;
          }
          const Roi cells = roi_intersect(footprint, mask->mask.roi());
          bool any = false;
          for (auto z = cells.offset[0]; z < cells.end()[0] && !any; ++z)
            for (auto y = cells.offset[1]; y < cells.end()[1] && !any; ++y)
              for (auto x = cells.offset[2]; x < cells.end()[2] && !any; ++x) any = mask->mask.at({z, y, x}) != 0;
          p.masked_in = any;
        }
        plans.push_back(p);
      }
    }
  }
  return plans;
}

std::vector<BlockPlan> partition_plans(const std::vector<BlockPlan>& plans, int n_parts, int part) {
  if (n_parts < 1 || part < 0 || part >= n_parts) {
    throw Error(ErrorCode::config, "partition index out of range",
                std::to_string(part) + "/" + std::to_string(n_parts));
  }
  std::vector<BlockPlan> active;
  for (const auto& p : plans) {
    if (p.masked_in) active.push_back(p);
  }
  const auto n = static_cast<std::int64_t>(active.size());
  const auto begin = n * part / n_parts;
  const auto end = n * (part + 1) / n_parts;
  return {active.begin() + begin, active.begin() + end};
}

void MemorySink::write(const AnyVolume& v) {
  std::visit(
      [&](auto& dst) {
        using V = std::decay_t<decltype(dst)>;
        const auto* src = std::get_if<V>(&v);
        if (!src) throw Error(ErrorCode::type, "volume type does not match the sink");
        paste(dst, *src);
      },
      v_);
}

AnyVolume DelayedSource::read(const Roi& r, double fill) const {
  std::this_thread::sleep_for(delay_);
  return inner_.read(r, fill);
}

void DelayedSink::write(const AnyVolume& v) {
  std::this_thread::sleep_for(delay_);
  inner_.write(v);
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {}

std::set<std::int64_t> Journal::completed() const {
  std::set<std::int64_t> done;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return done;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;
    const std::string line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const auto id = std::stoll(line, &used);
      if (used == line.size()) done.insert(id);
    } catch (const std::exception&) {
      throw Error(ErrorCode::codec, "malformed journal record '" + line + "'", path_.string());
    }
  }
  return done;
}

void Journal::append(std::int64_t block_id) {
  const std::string record = std::to_string(block_id) + "\n";
  std::lock_guard lock(mutex_);
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(ErrorCode::io, "cannot open journal", path_.string());
  const auto written = ::write(fd, record.data(), record.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(record.size())) throw Error(ErrorCode::io, "journal append failed", path_.string());
}

double RunReport::mean_utilization() const {
  if (worker_utilization.empty()) return 0.0;
  double s = 0.0;
  for (auto u : worker_utilization) s += u;
  return s / double(worker_utilization.size());
}

RunReport run(const std::vector<BlockPlan>& plans, const Predictor& predictor, const BlockSource& input,
              const std::vector<BlockSink*>& outputs, const RunOptions& options) {
  const auto contract = predictor.contract();
  if (contract.channels < 1 || static_cast<std::size_t>(contract.channels) != outputs.size()) {
    throw Error(ErrorCode::contract,
                "predictor produces " + std::to_string(contract.channels) + " channels but " +
                    std::to_string(outputs.size()) + " outputs were given");
  }
  for (const auto* sink : outputs) {
    if (!sink) throw Error(ErrorCode::config, "null output sink");
    if (sink->data_type() != contract.output_type) {
      throw Error(ErrorCode::contract, "predictor output type " + std::string(to_string(contract.output_type)) +
                                           " does not match output dataset type " +
                                           std::string(to_string(sink->data_type())));
    }
  }
  const int workers = std::max(1, options.workers);

  RunReport report;
  std::set<std::int64_t> journaled;
  if (options.journal) journaled = options.journal->completed();
  std::vector<const BlockPlan*> todo;
  for (const auto& p : plans) {
    if (!p.masked_in) {
      ++report.blocks_skipped;
    } else if (journaled.count(p.block_id)) {
      ++report.blocks_resumed;
    } else {
      todo.push_back(&p);
    }
  }

  std::atomic<std::size_t> next{0};
  const std::size_t limit =
      options.stop_after ? std::min<std::size_t>(todo.size(), static_cast<std::size_t>(std::max<std::int64_t>(0, *options.stop_after)))
                         : todo.size();
  std::atomic<std::int64_t> done{0};
  std::atomic<std::int64_t> voxels{0};
  FirstError error;
  std::vector<double> busy(static_cast<std::size_t>(workers), 0.0);

  const auto start = Clock::now();
  auto worker = [&](std::size_t w) {
    Channel<InFlight> loaded(static_cast<std::size_t>(std::max(1, options.prefetch)));
    Channel<InFlight> predicted(static_cast<std::size_t>(std::max(1, options.prefetch)));

    std::thread loader([&] {
      while (!error.failed()) {
        const auto i = next.fetch_add(1);
        if (i >= limit) break;
        const BlockPlan* plan = todo[i];
        try {
          AnyVolume in = input.read(plan->input_roi, options.fill);
          if (data_type(in) != contract.input_type) in = convert(in, contract.input_type);
          loaded.push(InFlight{plan, std::move(in), {}});
        } catch (const std::exception& e) {
          error.set(annotate(plan->block_id, e, ErrorCode::io));
        }
      }
      loaded.close();
    });

    std::thread writer([&] {
      while (auto item = predicted.pop()) {
        if (error.failed()) continue;
        try {
          for (std::size_t c = 0; c < outputs.size(); ++c) outputs[c]->write(item->outputs[c]);
          if (options.journal) options.journal->append(item->plan->block_id);
          done.fetch_add(1);
          voxels.fetch_add(item->plan->output_roi.size());
        } catch (const std::exception& e) {
          error.set(annotate(item->plan->block_id, e, ErrorCode::io));
        }
      }
    });

    while (auto item = loaded.pop()) {
      if (error.failed()) continue;
      const BlockPlan& plan = *item->plan;
      try {
        const auto t0 = Clock::now();
        item->outputs = predictor.predict(item->input, plan.output_roi);
        busy[w] += std::chrono::duration<double>(Clock::now() - t0).count();
        if (item->outputs.size() != outputs.size()) {
          throw Error(ErrorCode::contract, "predictor returned " + std::to_string(item->outputs.size()) + " channels");
        }
        for (std::size_t c = 0; c < outputs.size(); ++c) {
          if (roi_of(item->outputs[c]) != plan.output_roi) {
            throw Error(ErrorCode::contract, "predictor output " + to_string(roi_of(item->outputs[c])) +
                                                 " does not match output roi " + to_string(plan.output_roi));
          }
          if (data_type(item->outputs[c]) != outputs[c]->data_type()) {
            throw Error(ErrorCode::contract, "predictor output type does not match the output dataset");
          }
        }
        item->input = AnyVolume{};
        predicted.push(std::move(*item));
      } catch (const std::exception& e) {
        error.set(annotate(plan.block_id, e, ErrorCode::contract));
      }
    }
    predicted.close();
    loader.join();
    writer.join();
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker, static_cast<std::size_t>(w));
  for (auto& t : pool) t.join();
  error.rethrow();

  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  report.blocks_done = done.load();
  report.voxels_written = voxels.load();
  report.voxels_per_second = report.wall_seconds > 0 ? double(report.voxels_written) / report.wall_seconds : 0.0;
  for (double b : busy) report.worker_utilization.push_back(report.wall_seconds > 0 ? b / report.wall_seconds : 0.0);
  return report;
}

double eta_seconds(double total_voxels, int workers, double voxels_per_second_per_worker) {
  if (!(total_voxels > 0) || workers < 1 || !(voxels_per_second_per_worker > 0)) {
    throw Error(ErrorCode::config, "eta needs positive voxels, workers and rate");
  }
  return total_voxels / (double(workers) * voxels_per_second_per_worker);
}

}  // namespace cleftkit
