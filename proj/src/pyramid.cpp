#include "cleftkit/pyramid.hpp"

#include <filesystem>

#include "cleftkit/inference.hpp"
#include "cleftkit/n5.hpp"

namespace cleftkit {

namespace {

// Input roi of a block is its output roi scaled up and clipped to the level
// below, so the engine hands over exactly the voxels each cell averages.
class DownscalePredictor final : public Predictor {
 public:
  explicit DownscalePredictor(Coord factors) : factors_(factors) {}
  PredictorContract contract() const override { return {{0, 0, 0}, DataType::f32, DataType::f32, 1}; }
  std::vector<AnyVolume> predict(const AnyVolume& input, const Roi& output_roi) const override {
    FloatVolume out = downscale(std::get<FloatVolume>(input), factors_);
    if (out.roi() != output_roi) {
      throw Error(ErrorCode::contract, "downscaled block " + to_string(out.roi()) + " does not match " +
                                           to_string(output_roi));
    }
    return {std::move(out)};
  }

 private:
  Coord factors_;
};

}  // namespace

Roi downscaled_roi(const Roi& r, const Coord& factors) {
  Roi out;
  for (int a = 0; a < 3; ++a) {
    const auto lo = floor_div(r.offset[a], factors[a]);
    out.offset[a] = lo;
    out.shape[a] = r.shape[a] == 0 ? 0 : floor_div(r.end()[a] - 1, factors[a]) - lo + 1;
  }
  return out;
}

std::vector<PyramidLevel> build_pyramid(const n5::Container& container, const std::string& source,
                                        const std::vector<Coord>& relative_factors, int workers,
                                        Coord chunk_size) {
  std::vector<PyramidLevel> levels{{0, {1, 1, 1}, source}};
  n5::Dataset previous = container.open_dataset(source);
  const std::filesystem::path parent = std::filesystem::path(source).parent_path();

  for (std::size_t k = 0; k < relative_factors.size(); ++k) {
    const Coord& f = relative_factors[k];
    for (auto v : f) {
      if (v < 1) throw Error(ErrorCode::config, "pyramid factors must be >= 1", to_string(f));
    }
    const Roi prev_bounds = previous.bounds();
    const Roi bounds = downscaled_roi(prev_bounds, f);

    PyramidLevel level;
    level.index = static_cast<int>(k + 1);
    for (int a = 0; a < 3; ++a) level.factors[a] = levels.back().factors[a] * f[a];
    level.dataset = (parent / ("s" + std::to_string(level.index))).generic_string();

    n5::DatasetAttributes attrs;
    attrs.dimensions = bounds.shape;
    attrs.chunk_size = chunk_size;
    attrs.data_type = DataType::f32;
    const VoxelSize pvs = previous.voxel_size();
    const VoxelSize vs(pvs.z * double(f[0]), pvs.y * double(f[1]), pvs.x * double(f[2]));
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    extra["downsamplingFactors"] = {level.factors[2], level.factors[1], level.factors[0]};
    extra["resolution"] = {vs.x, vs.y, vs.z};
    n5::Dataset out = container.create_dataset(level.dataset, attrs, extra);

    // One block per output chunk keeps every write chunk-aligned.
    auto plans = plan_blocks(bounds, chunk_size, {0, 0, 0});
    for (auto& p : plans) {
      Roi scaled;
      for (int a = 0; a < 3; ++a) {
        scaled.offset[a] = p.output_roi.offset[a] * f[a];
        scaled.shape[a] = p.output_roi.shape[a] * f[a];
      }
      p.input_roi = roi_intersect(scaled, prev_bounds);
    }
    DatasetSource src(previous);
    DatasetSink sink(out);
    RunOptions options;
    options.workers = workers;
    run(plans, DownscalePredictor(f), src, {&sink}, options);

    levels.push_back(level);
    previous = out;
  }
  return levels;
}

}  // namespace cleftkit
