// cleftkit command-line tool. Every invocation prints exactly one JSON
// document on stdout; logs go to stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "cleftkit/augment.hpp"
#include "cleftkit/inference.hpp"
#include "cleftkit/metrics.hpp"
#include "cleftkit/n5.hpp"
#include "cleftkit/phantom.hpp"
#include "cleftkit/predictors.hpp"
#include "cleftkit/pyramid.hpp"
#include "cleftkit/sdt.hpp"
#include "cleftkit/unet.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cleftkit;

namespace {

struct Global {
  std::uint64_t seed = 0;
  std::string voxel_size;
  int verbose = 0;
  int workers = 0;
};

Global g;

void log(int level, const std::string& msg) {
  if (g.verbose >= level) std::cerr << "cleftkit: " << msg << "\n";
}

// ---- argument parsing helpers ----------------------------------------------

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::int64_t to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "not an integer: '" + s + "'", what);
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "not a number: '" + s + "'", what);
}

// "71x650x650" (z, y, x) or a single number for all axes.
Coord parse_shape(const std::string& s, char sep = 'x') {
  const auto parts = split(s, sep);
  if (parts.size() == 1) {
    const auto v = to_int(parts[0], s);
    return {v, v, v};
  }
  if (parts.size() != 3) throw Error(ErrorCode::config, "expected three values", s);
  return {to_int(parts[0], s), to_int(parts[1], s), to_int(parts[2], s)};
}

std::array<double, 3> parse_triple(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw Error(ErrorCode::config, "expected z,y,x", s);
  return {to_double(parts[0], s), to_double(parts[1], s), to_double(parts[2], s)};
}

json coord_json(const Coord& c) { return json::array({c[0], c[1], c[2]}); }
json roi_json(const Roi& r) { return {{"offset", coord_json(r.offset)}, {"shape", coord_json(r.shape)}}; }
json vs_json(const VoxelSize& v) { return json::array({v.z, v.y, v.x}); }

VoxelSize voxel_size_for(const n5::Dataset& ds) {
  if (g.voxel_size.empty()) return ds.voxel_size();
  const auto t = parse_triple(g.voxel_size);
  return VoxelSize(t[0], t[1], t[2]);
}

VoxelSize default_voxel_size() {
  if (g.voxel_size.empty()) return VoxelSize{};
  const auto t = parse_triple(g.voxel_size);
  return VoxelSize(t[0], t[1], t[2]);
}

int workers() {
  if (g.workers > 0) return g.workers;
  return std::max(1, int(std::thread::hardware_concurrency()));
}

// ---- datasets ----------------------------------------------------------------

// Nearest ancestor holding an N5 root attributes.json.
fs::path container_of(const fs::path& dataset) {
  for (fs::path p = fs::absolute(dataset).parent_path(); !p.empty(); p = p.parent_path()) {
    const auto attrs = p / "attributes.json";
    if (fs::exists(attrs)) {
      std::ifstream in(attrs);
      const auto j = json::parse(in, nullptr, false);
      if (j.is_object() && j.contains("n5")) return p;
    }
    if (p == p.root_path()) break;
  }
  throw Error(ErrorCode::config, "dataset is not inside an N5 container", dataset.string());
}

n5::Dataset create_output(const fs::path& path, const Coord& dims, Coord chunk, DataType t, const VoxelSize& vs) {
  n5::DatasetAttributes a;
  a.dimensions = dims;
  for (int i = 0; i < 3; ++i) chunk[i] = std::max<std::int64_t>(1, std::min(chunk[i], dims[i]));
  a.chunk_size = chunk;
  a.data_type = t;
  auto ds = n5::Dataset::create(path, a);
  ds.set_voxel_size(vs);
  return ds;
}

LabelVolume read_labels(const n5::Dataset& ds, std::optional<double> threshold = std::nullopt) {
  const auto any = ds.read_roi(ds.bounds());
  const auto vs = voxel_size_for(ds);
  LabelVolume out = std::visit(
      [&](const auto& v) -> LabelVolume {
        using T = typename std::decay_t<decltype(v)>::value_type;
        if constexpr (std::is_floating_point_v<T>) return threshold_to_labels(convert<float>(v), float(threshold.value_or(0.0)));
        else return binarize(v);
      },
      any);
  return LabelVolume(out.roi(), vs, std::move(out).data());
}

FloatVolume read_float(const n5::Dataset& ds) {
  auto v = convert<float>(ds.read_roi(ds.bounds()));
  return FloatVolume(v.roi(), voxel_size_for(ds), std::move(v).data());
}

BlockMask parse_mask(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::config, "mask must be <dataset>:<fz,fy,fx>", spec);
  const auto ds = n5::Dataset::open(spec.substr(0, colon));
  return BlockMask{read_labels(ds), parse_shape(spec.substr(colon + 1), ',')};
}

std::pair<int, int> parse_partition(const std::string& s) {
  const auto parts = split(s, '/');
  if (parts.size() != 2) throw Error(ErrorCode::config, "partition must be k/n", s);
  return {int(to_int(parts[0], s)), int(to_int(parts[1], s))};
}

ArchSpec resolve_arch(const std::string& s) {
  for (const auto& name : arch_preset_names())
    if (name == s) return arch_preset(s);
  return load_arch(s);
}

json report_json(const RunReport& r) {
  return {{"blocks_done", r.blocks_done},
          {"blocks_skipped", r.blocks_skipped},
          {"blocks_resumed", r.blocks_resumed},
          {"voxels_written", r.voxels_written},
          {"wall_seconds", r.wall_seconds},
          {"voxels_per_second", r.voxels_per_second},
          {"worker_utilization", r.worker_utilization},
          {"mean_utilization", r.mean_utilization()}};
}

json plan_json(const BlockPlan& p) {
  return {{"block_id", p.block_id},
          {"output", roi_json(p.output_roi)},
          {"input", roi_json(p.input_roi)},
          {"masked_in", p.masked_in}};
}

// ---- subcommands ---------------------------------------------------------------

struct PredictArgs {
  std::string input, output, arch, blocks, context, predictor = "identity", truth, mask, resume, partition;
  std::string chunk;
  double scale = 50.0;
  std::int64_t stop_after = -1;
  int prefetch = 2;
};

json cmd_predict(const PredictArgs& a) {
  const auto in = n5::Dataset::open(a.input);
  const auto vs = voxel_size_for(in);
  std::optional<ArchSpec> arch;
  if (!a.arch.empty()) arch = resolve_arch(a.arch);

  Coord block{64, 64, 64};
  if (!a.blocks.empty()) block = parse_shape(a.blocks);
  else if (arch && arch->production_output_shape) block = *arch->production_output_shape;
  else if (arch && arch->output_shape) block = *arch->output_shape;

  Coord context{0, 0, 0};
  if (!a.context.empty()) context = parse_shape(a.context);
  else if (arch) context = context_per_side(*arch, block);

  std::unique_ptr<Predictor> predictor;
  if (a.predictor == "oracle") {
    if (a.truth.empty()) throw Error(ErrorCode::config, "the oracle predictor needs --truth");
    auto truth = std::make_shared<DatasetSource>(n5::Dataset::open(a.truth));
    predictor = std::make_unique<StdtOraclePredictor>(truth, context, vs, a.scale, in.data_type());
  } else {
    predictor = make_predictor(a.predictor, context, in.data_type());
  }

  const Coord chunk = a.chunk.empty() ? block : parse_shape(a.chunk);
  for (int i = 0; i < 3; ++i) {
    if (block[i] % chunk[i] != 0)
      throw Error(ErrorCode::config, "block shape must be a multiple of the output chunk size",
                  to_string(block) + " vs " + to_string(chunk));
  }
  auto out = fs::exists(fs::path(a.output) / "attributes.json")
                 ? n5::Dataset::open(a.output)
                 : create_output(a.output, in.bounds().shape, chunk, predictor->contract().output_type, vs);
  if (out.bounds() != in.bounds()) throw Error(ErrorCode::shape, "output dataset bounds differ from the input", a.output);

  std::optional<BlockMask> mask;
  if (!a.mask.empty()) mask = parse_mask(a.mask);
  auto plans = plan_blocks(in.bounds(), block, context, mask ? &*mask : nullptr);
  const auto planned = plans.size();
  if (!a.partition.empty()) {
    const auto [k, n] = parse_partition(a.partition);
    plans = partition_plans(plans, n, k);
  }

  std::optional<Journal> journal;
  RunOptions opt;
  opt.workers = workers();
  opt.prefetch = a.prefetch;
  if (!a.resume.empty()) {
    journal.emplace(a.resume);
    opt.journal = &*journal;
  }
  if (a.stop_after >= 0) opt.stop_after = a.stop_after;

  log(1, "predict: " + std::to_string(plans.size()) + " blocks of " + to_string(block) + ", context " +
             to_string(context) + ", " + std::to_string(opt.workers) + " workers");
  DatasetSource source(in);
  DatasetSink sink(out);
  const auto report = run(plans, *predictor, source, {&sink}, opt);
  json j = report_json(report);
  j["blocks_planned"] = planned;
  j["block_shape"] = coord_json(block);
  j["context"] = coord_json(context);
  j["output"] = a.output;
  return j;
}

struct EvaluateArgs {
  std::string pred, truth, ignore;
  double threshold = 0.0;
};

json cmd_evaluate(const EvaluateArgs& a) {
  const auto pd = n5::Dataset::open(a.pred);
  const auto td = n5::Dataset::open(a.truth);
  const auto pred = read_labels(pd, a.threshold);
  const auto truth = read_labels(td);
  std::optional<LabelVolume> ignore;
  if (!a.ignore.empty()) ignore = read_labels(n5::Dataset::open(a.ignore));
  const auto s = cleft_score(pred, truth, voxel_size_for(td), ignore ? &*ignore : nullptr);
  // non-finite distances (an empty side) serialize as null
  return {{"fpd", s.fpd_nm},
          {"fnd", s.fnd_nm},
          {"cremi_score", s.cremi_score_nm},
          {"n_pred_pos", s.n_pred_pos},
          {"n_true_pos", s.n_true_pos}};
}

struct UnaryArgs {
  std::string input, output;
  double scale = 50.0;
  double t = 0.0;
};

json float_summary(const FloatVolume& v) {
  double lo = 0, hi = 0;
  if (v.size() > 0) {
    const auto [mn, mx] = std::minmax_element(v.data().begin(), v.data().end());
    lo = *mn;
    hi = *mx;
  }
  return {{"shape", coord_json(v.shape())}, {"min", lo}, {"max", hi}};
}

json cmd_sedt(const UnaryArgs& a) {
  const auto in = n5::Dataset::open(a.input);
  const auto d = sedt(read_labels(in), voxel_size_for(in));
  auto out = create_output(a.output, in.bounds().shape, in.attributes().chunk_size, DataType::f32, d.voxel_size());
  out.write(d);
  json j = float_summary(d);
  j["output"] = a.output;
  return j;
}

json cmd_stdt(const UnaryArgs& a) {
  const auto in = n5::Dataset::open(a.input);
  const auto s = stdt(read_float(in), a.scale);
  auto out = create_output(a.output, in.bounds().shape, in.attributes().chunk_size, DataType::f32, s.voxel_size());
  out.write(s);
  json j = float_summary(s);
  j["output"] = a.output;
  return j;
}

json cmd_threshold(const UnaryArgs& a) {
  const auto in = n5::Dataset::open(a.input);
  const auto l = threshold_to_labels(read_float(in), float(a.t));
  auto out = create_output(a.output, in.bounds().shape, in.attributes().chunk_size, DataType::u8, l.voxel_size());
  out.write(l);
  std::int64_t pos = 0;
  for (auto x : l.data()) pos += x;
  return {{"output", a.output}, {"shape", coord_json(l.shape())}, {"n_pos", pos}};
}

struct SampleArgs {
  std::string raw, labels, aux, shape, context, arch, augment, output;
  int count = 1;
};

// Raw intensities are fed to the sampler in [0, 1].
FloatVolume read_unit_raw(const n5::Dataset& ds) {
  auto v = read_float(ds);
  double scale = 1.0;
  switch (ds.data_type()) {
    case DataType::u8: scale = 255.0; break;
    case DataType::u16: scale = 65535.0; break;
    default: break;
  }
  if (scale != 1.0)
    for (auto& x : v.data()) x = float(x / scale);
  return v;
}

json cmd_sample(const SampleArgs& a) {
  const auto rd = n5::Dataset::open(a.raw);
  const auto ld = n5::Dataset::open(a.labels);
  auto raw = std::make_shared<const FloatVolume>(read_unit_raw(rd));
  auto labels = std::make_shared<const LabelVolume>(read_labels(ld));
  std::shared_ptr<const LabelVolume> aux;
  if (!a.aux.empty()) aux = std::make_shared<const LabelVolume>(read_labels(n5::Dataset::open(a.aux)));

  const Coord shape = parse_shape(a.shape);
  Coord context{0, 0, 0};
  if (!a.context.empty()) context = parse_shape(a.context);
  else if (!a.arch.empty()) context = context_per_side(resolve_arch(a.arch), shape);

  AugmentConfig config;
  if (!a.augment.empty()) {
    std::ifstream in(a.augment);
    if (!in) throw Error(ErrorCode::io, "cannot read augment config", a.augment);
    config = AugmentConfig::from_json(nlohmann::json::parse(in));
  }

  BatchSampler sampler(raw, labels, aux, shape, context, config);
  n5::Container out(a.output);
  Rng seeds(g.seed);
  json batches = json::array();
  for (int i = 0; i < a.count; ++i) {
    const auto seed = seeds.next();
    const auto b = sampler.sample(seed);
    const std::string name = "batch" + std::to_string(i);
    // stored with the origin at the batch corner
    const auto write = [&](const std::string& sub, const AnyVolume& v, const Roi& r) {
      n5::DatasetAttributes attrs;
      attrs.dimensions = r.shape;
      attrs.chunk_size = r.shape;
      attrs.data_type = data_type(v);
      auto ds = out.create_dataset(name + "/" + sub, attrs);
      ds.set_voxel_size(raw->voxel_size());
      ds.set_attribute("offset", coord_json(r.offset));
      std::visit([&](const auto& vol) { ds.write(vol.translated(Coord{0, 0, 0})); }, v);
    };
    write("raw", b.raw, b.raw.roi());
    write("labels", b.labels, b.labels.roi());
    if (b.aux_labels) write("aux_labels", *b.aux_labels, b.aux_labels->roi());
    batches.push_back({{"name", name},
                       {"seed", seed},
                       {"draws", b.draws},
                       {"raw_roi", roi_json(b.raw.roi())},
                       {"labels_roi", roi_json(b.labels.roi())}});
    log(1, "sample: " + name + " after " + std::to_string(b.draws) + " draws");
  }
  return {{"seed", g.seed}, {"context", coord_json(context)}, {"batches", batches}};
}

struct PyramidArgs {
  std::string input, levels, chunk = "64";
};

json cmd_pyramid(const PyramidArgs& a) {
  const fs::path input = fs::absolute(a.input);
  const auto root = container_of(input);
  const auto name = fs::relative(input, root).generic_string();
  std::vector<Coord> factors;
  std::istringstream in(a.levels);
  for (std::string tok; in >> tok;) factors.push_back(parse_shape(tok, ','));
  if (factors.empty()) throw Error(ErrorCode::config, "no pyramid levels given");
  const auto levels = build_pyramid(n5::Container(root), name, factors, workers(), parse_shape(a.chunk));
  json out = json::array();
  for (const auto& l : levels) {
    out.push_back({{"level", l.index}, {"factors", coord_json(l.factors)}, {"dataset", (root / l.dataset).string()}});
  }
  return {{"levels", out}};
}

struct MaskArgs {
  std::string input, range, output;
};

json cmd_mask(const MaskArgs& a) {
  const auto parts = split(a.range, ':');
  if (parts.size() != 2) throw Error(ErrorCode::config, "range must be lo:hi", a.range);
  const auto in = n5::Dataset::open(a.input);
  const auto v = read_float(in);
  const auto m = build_mask(v, to_double(parts[0], a.range), to_double(parts[1], a.range));
  auto out = create_output(a.output, in.bounds().shape, in.attributes().chunk_size, DataType::u8, m.voxel_size());
  out.write(m);
  std::int64_t pos = 0;
  for (auto x : m.data()) pos += x;
  return {{"output", a.output},
          {"shape", coord_json(m.shape())},
          {"n_pos", pos},
          {"positive_fraction", m.size() ? double(pos) / double(m.size()) : 0.0}};
}

struct PlanArgs {
  std::string total, input, blocks, context, arch, mask, partition;
  bool summary = false;
};

json cmd_plan(const PlanArgs& a) {
  Roi total;
  if (!a.input.empty()) total = n5::Dataset::open(a.input).bounds();
  else if (!a.total.empty()) total = Roi({0, 0, 0}, parse_shape(a.total));
  else throw Error(ErrorCode::config, "plan needs --total or --input");
  std::optional<ArchSpec> arch;
  if (!a.arch.empty()) arch = resolve_arch(a.arch);
  Coord block;
  if (!a.blocks.empty()) block = parse_shape(a.blocks);
  else if (arch && arch->production_output_shape) block = *arch->production_output_shape;
  else throw Error(ErrorCode::config, "plan needs --blocks");
  Coord context{0, 0, 0};
  if (!a.context.empty()) context = parse_shape(a.context);
  else if (arch) context = context_per_side(*arch, block);

  std::optional<BlockMask> mask;
  if (!a.mask.empty()) mask = parse_mask(a.mask);
  auto plans = plan_blocks(total, block, context, mask ? &*mask : nullptr);
  if (!a.partition.empty()) {
    const auto [k, n] = parse_partition(a.partition);
    plans = partition_plans(plans, n, k);
  }
  std::int64_t in = 0;
  for (const auto& p : plans) in += p.masked_in;
  json j = {{"total", roi_json(total)},
            {"block_shape", coord_json(block)},
            {"context", coord_json(context)},
            {"n_blocks", plans.size()},
            {"n_masked_in", in}};
  if (!a.summary) {
    json list = json::array();
    for (const auto& p : plans) list.push_back(plan_json(p));
    j["blocks"] = std::move(list);
  }
  return j;
}

struct BenchArgs {
  double predict_ms = 10, io_ms = 2;
  int blocks = 100;
  double total_voxels = 50e12, rate = 3e6;
  int gpus = 48;
};

json cmd_bench(const BenchArgs& a) {
  const Roi total({0, 0, 0}, {std::int64_t(a.blocks), 8, 8});
  const auto plans = plan_blocks(total, {1, 8, 8}, {0, 0, 0});
  MemorySource mem{FloatVolume(total)};
  MemorySink mem_sink{FloatVolume(total)};
  // the per-block I/O time is split evenly between read and write
  const auto half_io = std::chrono::microseconds(std::int64_t(a.io_ms * 500.0));
  DelayedSource src(mem, half_io);
  DelayedSink sink(mem_sink, half_io);
  RunOptions opt;
  opt.workers = workers();
  const FixedDelayPredictor predictor(std::chrono::microseconds(std::int64_t(a.predict_ms * 1000.0)));
  const auto report = run(plans, predictor, src, {&sink}, opt);
  const double eta = eta_seconds(a.total_voxels, a.gpus, a.rate);
  json j = report_json(report);
  j["predict_ms"] = a.predict_ms;
  j["io_ms"] = a.io_ms;
  j["workers"] = opt.workers;
  j["eta"] = {{"total_voxels", a.total_voxels},
              {"gpus", a.gpus},
              {"voxels_per_second_per_gpu", a.rate},
              {"seconds", eta},
              {"days", eta / 86400.0}};
  return j;
}

struct DensityArgs {
  std::string input, output, sigma, out_vs;
  double threshold = 0.0;
};

json cmd_density(const DensityArgs& a) {
  const auto in = n5::Dataset::open(a.input);
  const auto labels = read_labels(in, a.threshold);
  auto v = convert<float>(labels);
  const auto sigma = parse_triple(a.sigma);
  const auto ovs = parse_triple(a.out_vs);
  const auto d = psf_density(FloatVolume(v.roi(), labels.voxel_size(), std::move(v).data()), sigma,
                             VoxelSize(ovs[0], ovs[1], ovs[2]));
  auto out = create_output(a.output, d.shape(), {64, 64, 64}, DataType::f32, d.voxel_size());
  out.write(d.translated(Coord{0, 0, 0}));
  double mass = 0;
  for (float x : d.data()) mass += x;
  json j = float_summary(d);
  j["output"] = a.output;
  j["voxel_size"] = vs_json(d.voxel_size());
  j["mean"] = d.size() ? mass / double(d.size()) : 0.0;
  return j;
}

struct PhantomArgs {
  std::string output, shape = "64", chunk = "32";
  double sample_fraction = 0.2;
  int clefts = 12;
};

json cmd_phantom(const PhantomArgs& a) {
  PhantomOptions opts;
  opts.sample_fraction = a.sample_fraction;
  opts.clefts = a.clefts;
  const auto vs = default_voxel_size();
  const auto p = make_phantom(parse_shape(a.shape), g.seed, vs, opts);
  n5::Container c(a.output);
  const Coord chunk = parse_shape(a.chunk);
  create_output(c.root() / "raw", p.raw.shape(), chunk, DataType::f32, vs).write(p.raw);
  create_output(c.root() / "clefts", p.clefts.shape(), chunk, DataType::u8, vs).write(p.clefts);
  create_output(c.root() / "sample", p.sample.shape(), chunk, DataType::u8, vs).write(p.sample);
  std::int64_t n_clefts = 0, n_sample = 0;
  for (auto x : p.clefts.data()) n_clefts += x;
  for (auto x : p.sample.data()) n_sample += x;
  return {{"container", a.output},
          {"datasets", {"raw", "clefts", "sample"}},
          {"shape", coord_json(p.raw.shape())},
          {"voxel_size", vs_json(vs)},
          {"seed", g.seed},
          {"n_cleft_voxels", n_clefts},
          {"sample_fraction", double(n_sample) / double(p.sample.size())}};
}

struct FovArgs {
  std::string arch, output_shape;
};

json cmd_fov(const FovArgs& a) {
  const auto arch = resolve_arch(a.arch);
  const auto r = physical_fov(arch, default_voxel_size());
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"name", l.name},
                      {"voxel_fov", coord_json(l.voxel_fov)},
                      {"physical_nm", json::array({l.physical_nm[0], l.physical_nm[1], l.physical_nm[2]})},
                      {"isotropy", l.isotropy}});
  }
  json j = {{"arch", arch.name.empty() ? a.arch : arch.name}, {"layers", layers}};
  if (!a.output_shape.empty()) {
    const auto out = parse_shape(a.output_shape);
    j["output_shape"] = coord_json(out);
    j["input_shape"] = coord_json(required_input_shape(arch, out));
    j["context"] = coord_json(context_per_side(arch, out));
  }
  return j;
}

void print(const json& j) { std::cout << j.dump() << "\n"; }

int fail(std::string_view code, const std::string& message, const std::string& context) {
  print({{"code", code}, {"message", message}, {"context", context}});
  log(0, std::string(code) + ": " + message + (context.empty() ? "" : " [" + context + "]"));
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blockwise synaptic-cleft prediction toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values");
  app.add_option("--seed", g.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--voxel-size", g.voxel_size, "Voxel size z,y,x in nm (default: dataset attribute or 40,4,4)");
  app.add_flag("-v,--verbose", g.verbose, "Log to stderr (repeat for more)");
  app.add_option("--workers", g.workers, "Worker threads (default: hardware threads)")->envname("CLEFTKIT_WORKERS");

  std::function<json()> action;

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Blockwise prediction over a dataset");
  predict->add_option("--input", pa.input, "Input dataset")->required();
  predict->add_option("--output", pa.output, "Output dataset (created if missing)")->required();
  predict->add_option("--arch", pa.arch, "Architecture preset name or spec JSON; provides the context");
  predict->add_option("--blocks", pa.blocks, "Output block shape ZxYxX");
  predict->add_option("--context", pa.context, "Context per side ZxYxX (overrides --arch)");
  predict->add_option("--predictor", pa.predictor, "identity | box | gaussian | oracle")->capture_default_str();
  predict->add_option("--truth", pa.truth, "Ground-truth dataset for the oracle predictor");
  predict->add_option("--scale", pa.scale, "STDT scale in nm for the oracle predictor")->capture_default_str();
  predict->add_option("--mask", pa.mask, "Mask as <dataset>:<fz,fy,fx>");
  predict->add_option("--resume", pa.resume, "Done-block journal file");
  predict->add_option("--partition", pa.partition, "Run slice k/n of the masked-in blocks");
  predict->add_option("--stop-after", pa.stop_after, "Hand out at most this many blocks");
  predict->add_option("--chunk", pa.chunk, "Output chunk size ZxYxX (default: block shape)");
  predict->add_option("--prefetch", pa.prefetch, "Blocks in flight per pipeline stage")->capture_default_str();
  predict->callback([&] { action = [&] { return cmd_predict(pa); }; });

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "CREMI cleft score of a prediction against ground truth");
  evaluate->add_option("--pred", ea.pred, "Predicted labels or float prediction")->required();
  evaluate->add_option("--truth", ea.truth, "Ground-truth cleft labels")->required();
  evaluate->add_option("--ignore", ea.ignore, "Nonzero voxels are excluded");
  evaluate->add_option("--threshold", ea.threshold, "Threshold for float predictions")->capture_default_str();
  evaluate->callback([&] { action = [&] { return cmd_evaluate(ea); }; });

  UnaryArgs sa, ta, tha;
  auto* sedt_cmd = app.add_subcommand("sedt", "Signed Euclidean distance transform of labels (nm)");
  sedt_cmd->add_option("--input", sa.input)->required();
  sedt_cmd->add_option("--output", sa.output)->required();
  sedt_cmd->callback([&] { action = [&] { return cmd_sedt(sa); }; });

  auto* stdt_cmd = app.add_subcommand("stdt", "tanh(SEDT / s)");
  stdt_cmd->add_option("--input", ta.input, "SEDT dataset")->required();
  stdt_cmd->add_option("--output", ta.output)->required();
  stdt_cmd->add_option("--scale", ta.scale, "s in nm")->capture_default_str();
  stdt_cmd->callback([&] { action = [&] { return cmd_stdt(ta); }; });

  auto* threshold = app.add_subcommand("threshold", "Binary labels from a float volume");
  threshold->add_option("--input", tha.input)->required();
  threshold->add_option("--output", tha.output)->required();
  threshold->add_option("--t", tha.t, "Threshold; voxels > t are positive")->capture_default_str();
  threshold->callback([&] { action = [&] { return cmd_threshold(tha); }; });

  SampleArgs sma;
  auto* sample = app.add_subcommand("sample", "Draw augmented training batches");
  sample->add_option("--raw", sma.raw)->required();
  sample->add_option("--labels", sma.labels)->required();
  sample->add_option("--aux", sma.aux, "Auxiliary labels");
  sample->add_option("--shape", sma.shape, "Label batch shape ZxYxX")->required();
  sample->add_option("--context", sma.context, "Raw context per side ZxYxX");
  sample->add_option("--arch", sma.arch, "Derive the context from an architecture");
  sample->add_option("--augment", sma.augment, "Augmentation config JSON");
  sample->add_option("--count", sma.count)->capture_default_str();
  sample->add_option("--output", sma.output, "Output N5 container")->required();
  sample->callback([&] { action = [&] { return cmd_sample(sma); }; });

  PyramidArgs pya;
  auto* pyramid = app.add_subcommand("pyramid", "Mean-pooled scale pyramid next to a dataset named s0");
  pyramid->add_option("--input", pya.input)->required();
  pyramid->add_option("--levels", pya.levels, "Relative factors per level, e.g. \"1,2,2 2,2,2\"")->required();
  pyramid->add_option("--chunk", pya.chunk, "Chunk size of the new levels")->capture_default_str();
  pyramid->callback([&] { action = [&] { return cmd_pyramid(pya); }; });

  MaskArgs ma;
  auto* mask = app.add_subcommand("mask", "Intensity-range foreground mask");
  mask->add_option("--input", ma.input, "Pyramid level dataset")->required();
  mask->add_option("--range", ma.range, "lo:hi")->required();
  mask->add_option("--output", ma.output)->required();
  mask->callback([&] { action = [&] { return cmd_mask(ma); }; });

  PlanArgs pla;
  auto* plan = app.add_subcommand("plan", "List output blocks and their padded inputs");
  plan->add_option("--total", pla.total, "Volume shape ZxYxX");
  plan->add_option("--input", pla.input, "Take the volume shape from a dataset");
  plan->add_option("--blocks", pla.blocks, "Output block shape ZxYxX");
  plan->add_option("--context", pla.context, "Context per side ZxYxX");
  plan->add_option("--arch", pla.arch, "Architecture preset or spec JSON");
  plan->add_option("--mask", pla.mask, "Mask as <dataset>:<fz,fy,fx>");
  plan->add_option("--partition", pla.partition, "Slice k/n of the masked-in blocks");
  plan->add_flag("--summary", pla.summary, "Counts only");
  plan->callback([&] { action = [&] { return cmd_plan(pla); }; });

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Pipeline utilization with a fixed-delay predictor, plus ETA");
  bench->add_option("--predict-ms", ba.predict_ms)->capture_default_str();
  bench->add_option("--io-ms", ba.io_ms, "Read plus write time per block")->capture_default_str();
  bench->add_option("--blocks", ba.blocks)->capture_default_str();
  bench->add_option("--total-voxels", ba.total_voxels)->capture_default_str();
  bench->add_option("--gpus", ba.gpus)->capture_default_str();
  bench->add_option("--rate", ba.rate, "Voxels per second per GPU")->capture_default_str();
  bench->callback([&] { action = [&] { return cmd_bench(ba); }; });

  DensityArgs da;
  auto* density = app.add_subcommand("density", "Gaussian-PSF density of predicted clefts");
  density->add_option("--input", da.input)->required();
  density->add_option("--output", da.output)->required();
  density->add_option("--sigma-nm", da.sigma, "PSF sigma z,y,x in nm")->required();
  density->add_option("--output-voxel-size", da.out_vs, "z,y,x in nm")->required();
  density->add_option("--threshold", da.threshold, "Threshold for float predictions")->capture_default_str();
  density->callback([&] { action = [&] { return cmd_density(da); }; });

  PhantomArgs pha;
  auto* phantom = app.add_subcommand("phantom", "Write a synthetic raw/clefts/sample container");
  phantom->add_option("--output", pha.output, "Container root")->required();
  phantom->add_option("--shape", pha.shape, "ZxYxX")->capture_default_str();
  phantom->add_option("--chunk", pha.chunk)->capture_default_str();
  phantom->add_option("--sample-fraction", pha.sample_fraction)->capture_default_str();
  phantom->add_option("--clefts", pha.clefts)->capture_default_str();
  phantom->callback([&] { action = [&] { return cmd_phantom(pha); }; });

  FovArgs fa;
  auto* fov = app.add_subcommand("fov", "Per-layer field of view of an architecture");
  fov->add_option("--arch", fa.arch, "Preset name or spec JSON")->required();
  fov->add_option("--output-shape", fa.output_shape, "Also report input shape and context for ZxYxX");
  fov->callback([&] { action = [&] { return cmd_fov(fa); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, std::cerr, std::cerr);
    print({{"help", true}});
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, std::cerr, std::cerr);
    print({{"help", true}});
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), "");
  }

  try {
    print(action());
    return 0;
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what(), e.context());
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what(), "");
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), e.path1().string());
  } catch (const std::exception& e) {
    return fail("internal", e.what(), "");
  }
}
