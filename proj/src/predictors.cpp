#include "cleftkit/predictors.hpp"

#include <cmath>
#include <thread>

#include "cleftkit/augment.hpp"

namespace cleftkit {

namespace {

void check_input(const AnyVolume& input, DataType expected, const Roi& output_roi, const Coord& context) {
  if (data_type(input) != expected) {
    throw Error(ErrorCode::contract, "predictor input has type " + std::string(to_string(data_type(input))) +
                                         ", expected " + std::string(to_string(expected)));
  }
  if (!roi_of(input).contains(roi_grow(output_roi, context))) {
    throw Error(ErrorCode::contract, "predictor input " + to_string(roi_of(input)) + " does not cover " +
                                         to_string(roi_grow(output_roi, context)));
  }
}

// One pass along `axis`: out(p) = sum_k taps[k] * in(p + k - r), for every p
// of `out_roi`, which must lie inside in.roi() shrunk by r along the axis.
FloatVolume stencil_pass(const FloatVolume& in, const Roi& out_roi, int axis, const std::vector<float>& taps) {
  const auto r = static_cast<std::int64_t>(taps.size() / 2);
  FloatVolume out(out_roi, in.voxel_size());
  Coord step{0, 0, 0};
  step[axis] = 1;
  const Coord& io = in.roi().offset;
  const Coord& oo = out_roi.offset;
  for (std::int64_t z = 0; z < out_roi.shape[0]; ++z) {
    for (std::int64_t y = 0; y < out_roi.shape[1]; ++y) {
      for (std::int64_t x = 0; x < out_roi.shape[2]; ++x) {
        const std::int64_t bz = oo[0] + z - io[0] - r * step[0];
        const std::int64_t by = oo[1] + y - io[1] - r * step[1];
        const std::int64_t bx = oo[2] + x - io[2] - r * step[2];
        float acc = 0.0f;
        for (std::size_t k = 0; k < taps.size(); ++k) {
          const auto kk = static_cast<std::int64_t>(k);
          acc += taps[k] * in(bz + kk * step[0], by + kk * step[1], bx + kk * step[2]);
        }
        out(z, y, x) = acc;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<AnyVolume> IdentityPredictor::predict(const AnyVolume& input, const Roi& output_roi) const {
  check_input(input, type_, output_roi, context_);
  return {read_region(input, output_roi)};
}

StencilPredictor StencilPredictor::box(Coord radius) {
  std::array<std::vector<float>, 3> taps;
  for (int a = 0; a < 3; ++a) {
    if (radius[a] < 0) throw Error(ErrorCode::config, "stencil radius must be non-negative", to_string(radius));
    const auto n = static_cast<std::size_t>(2 * radius[a] + 1);
    taps[a].assign(n, 1.0f / static_cast<float>(n));
  }
  return StencilPredictor(radius, std::move(taps));
}

StencilPredictor StencilPredictor::gaussian(std::array<double, 3> sigma_voxels) {
  std::array<std::vector<float>, 3> taps;
  Coord radius{};
  for (int a = 0; a < 3; ++a) {
    const double s = sigma_voxels[a];
    if (!(s >= 0)) throw Error(ErrorCode::config, "stencil sigma must be non-negative");
    radius[a] = static_cast<std::int64_t>(std::ceil(3.0 * s));
    std::vector<double> w(static_cast<std::size_t>(2 * radius[a] + 1));
    double sum = 0.0;
    for (std::int64_t k = -radius[a]; k <= radius[a]; ++k) {
      const double v = s > 0 ? std::exp(-0.5 * double(k * k) / (s * s)) : 1.0;
      w[static_cast<std::size_t>(k + radius[a])] = v;
      sum += v;
    }
    for (double v : w) taps[a].push_back(static_cast<float>(v / sum));
  }
  return StencilPredictor(radius, std::move(taps));
}

std::vector<AnyVolume> StencilPredictor::predict(const AnyVolume& input, const Roi& output_roi) const {
  check_input(input, DataType::f32, output_roi, radius_);
  const auto& in = std::get<FloatVolume>(input);
  // x, then y, then z; each pass only shrinks the axis it filters.
  Roi rx = roi_grow(output_roi, {radius_[0], radius_[1], 0});
  Roi ry = roi_grow(output_roi, {radius_[0], 0, 0});
  FloatVolume cropped = read_region(in, roi_grow(output_roi, radius_));
  FloatVolume a = stencil_pass(cropped, rx, 2, taps_[2]);
  FloatVolume b = stencil_pass(a, ry, 1, taps_[1]);
  return {stencil_pass(b, output_roi, 0, taps_[0])};
}

FloatVolume StencilPredictor::apply(const FloatVolume& v) const {
  auto out = predict(read_region(v, roi_grow(v.roi(), radius_), 0.0f), v.roi());
  return std::get<FloatVolume>(std::move(out.front()));
}

std::vector<AnyVolume> StdtOraclePredictor::predict(const AnyVolume& input, const Roi& output_roi) const {
  check_input(input, input_type_, output_roi, context_);
  const Roi in_roi = roi_grow(output_roi, context_);
  const auto truth = convert<std::uint8_t>(truth_->read(in_roi, 0.0));
  LabelVolume labels = binarize(truth);
  FloatVolume target = stdt_target(labels, voxel_size_, scale_nm_);
  return {read_region(target, output_roi)};
}

std::vector<AnyVolume> FixedDelayPredictor::predict(const AnyVolume& input, const Roi& output_roi) const {
  check_input(input, type_, output_roi, {0, 0, 0});
  std::this_thread::sleep_for(delay_);
  return {read_region(input, output_roi)};
}

std::unique_ptr<Predictor> make_predictor(const std::string& name, Coord context, DataType type) {
  if (name == "identity") return std::make_unique<IdentityPredictor>(context, type);
  if (name == "box") return std::make_unique<StencilPredictor>(StencilPredictor::box(context));
  if (name == "gaussian") {
    return std::make_unique<StencilPredictor>(
        StencilPredictor::gaussian({double(context[0]) / 3.0, double(context[1]) / 3.0, double(context[2]) / 3.0}));
  }
  throw Error(ErrorCode::config, "unknown predictor '" + name + "'", "identity, box, gaussian");
}

}  // namespace cleftkit
