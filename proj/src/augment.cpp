#include "cleftkit/augment.hpp"

#include <numbers>

#include "cleftkit/sdt.hpp"

namespace cleftkit {

using json = nlohmann::json;

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw Error(ErrorCode::config, "uniform_int needs a positive range");
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % un;
  std::uint64_t r = 0;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::int64_t>(r % un);
}

double Rng::normal(double mean, double sigma) {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return mean + sigma * z;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return mean + sigma * r * std::cos(theta);
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::config, std::string(what) + " must be a probability in [0, 1]");
  };
  prob(transpose_xy, "transpose_xy");
  prob(missing_section, "missing_section");
  prob(noisy_section, "noisy_section");
  if (!(noise_sigma >= 0)) throw Error(ErrorCode::config, "noise_sigma must be >= 0");
  if (!(elastic_jitter_sigma >= 0)) throw Error(ErrorCode::config, "elastic jitter sigma must be >= 0");
  if (!(elastic_rotation_max >= 0)) throw Error(ErrorCode::config, "elastic rotation range must be >= 0");
  if (!(elastic_control_spacing >= 1)) throw Error(ErrorCode::config, "elastic control spacing must be >= 1");
  if (intensity_scale_min > intensity_scale_max || intensity_shift_min > intensity_shift_max) {
    throw Error(ErrorCode::config, "intensity ranges must have min <= max");
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.transpose_xy = 0.0;
  c.intensity_scale_min = c.intensity_scale_max = 1.0;
  c.intensity_shift_min = c.intensity_shift_max = 0.0;
  c.elastic_jitter_sigma = 0.0;
  c.elastic_rotation_max = 0.0;
  c.missing_section = 0.0;
  c.noisy_section = 0.0;
  return c;
}

AugmentConfig AugmentConfig::from_json(const json& j) {
  AugmentConfig c;
  try {
    c.transpose_xy = j.value("transpose_xy", c.transpose_xy);
    if (j.contains("intensity")) {
      const auto& i = j.at("intensity");
      if (i.contains("scale")) {
        c.intensity_scale_min = i.at("scale").at(0).get<double>();
        c.intensity_scale_max = i.at("scale").at(1).get<double>();
      }
      if (i.contains("shift")) {
        c.intensity_shift_min = i.at("shift").at(0).get<double>();
        c.intensity_shift_max = i.at("shift").at(1).get<double>();
      }
    }
    if (j.contains("elastic")) {
      const auto& e = j.at("elastic");
      c.elastic_control_spacing = e.value("control_spacing", c.elastic_control_spacing);
      c.elastic_jitter_sigma = e.value("jitter_sigma", c.elastic_jitter_sigma);
      c.elastic_rotation_max = e.value("rotation_max", c.elastic_rotation_max);
    }
    c.missing_section = j.value("missing_section", c.missing_section);
    if (j.contains("noisy_section")) {
      const auto& n = j.at("noisy_section");
      c.noisy_section = n.value("p", c.noisy_section);
      c.noise_sigma = n.value("sigma", c.noise_sigma);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("malformed augmentation config: ") + e.what());
  }
  c.validate();
  return c;
}

json AugmentConfig::to_json() const {
  return json{
      {"transpose_xy", transpose_xy},
      {"intensity", {{"scale", {intensity_scale_min, intensity_scale_max}}, {"shift", {intensity_shift_min, intensity_shift_max}}}},
      {"elastic",
       {{"control_spacing", elastic_control_spacing}, {"jitter_sigma", elastic_jitter_sigma}, {"rotation_max", elastic_rotation_max}}},
      {"missing_section", missing_section},
      {"noisy_section", {{"p", noisy_section}, {"sigma", noise_sigma}}},
  };
}

ElasticField::ElasticField(double origin_y, double origin_x, double spacing, std::int64_t rows, std::int64_t cols)
    : origin_y_(origin_y),
      origin_x_(origin_x),
      spacing_(spacing),
      rows_(rows),
      cols_(cols),
      dy_(static_cast<std::size_t>(rows * cols), 0.0),
      dx_(static_cast<std::size_t>(rows * cols), 0.0) {
  if (!(spacing >= 1) || rows < 1 || cols < 1) throw Error(ErrorCode::config, "invalid elastic control grid");
}

ElasticField ElasticField::random(const Roi& roi, double spacing, double jitter_sigma, double rotation_max, Rng& rng) {
  const auto rows = static_cast<std::int64_t>(std::ceil(double(std::max<std::int64_t>(roi.shape[1] - 1, 0)) / spacing)) + 1;
  const auto cols = static_cast<std::int64_t>(std::ceil(double(std::max<std::int64_t>(roi.shape[2] - 1, 0)) / spacing)) + 1;
  ElasticField f(double(roi.offset[1]), double(roi.offset[2]), spacing, rows, cols);
  if (jitter_sigma > 0) {
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < cols; ++c) {
        const double dy = rng.normal(0.0, jitter_sigma);
        const double dx = rng.normal(0.0, jitter_sigma);
        f.set_offset(r, c, dy, dx);
      }
    }
  }
  if (rotation_max > 0) {
    const double angle = rng.uniform(-rotation_max, rotation_max);
    f.set_rotation(angle, double(roi.offset[1]) + double(roi.shape[1] - 1) / 2.0,
                   double(roi.offset[2]) + double(roi.shape[2] - 1) / 2.0);
  }
  return f;
}

void ElasticField::set_offset(std::int64_t row, std::int64_t col, double dy, double dx) {
  const auto i = static_cast<std::size_t>(row * cols_ + col);
  dy_.at(i) = dy;
  dx_.at(i) = dx;
}

void ElasticField::set_rotation(double angle, double center_y, double center_x) {
  angle_ = angle;
  center_y_ = center_y;
  center_x_ = center_x;
}

std::array<double, 2> ElasticField::displacement(double y, double x) const {
  const double u = std::clamp((y - origin_y_) / spacing_, 0.0, double(rows_ - 1));
  const double v = std::clamp((x - origin_x_) / spacing_, 0.0, double(cols_ - 1));
  const auto r0 = std::min<std::int64_t>(static_cast<std::int64_t>(u), rows_ - 1);
  const auto c0 = std::min<std::int64_t>(static_cast<std::int64_t>(v), cols_ - 1);
  const auto r1 = std::min(r0 + 1, rows_ - 1);
  const auto c1 = std::min(c0 + 1, cols_ - 1);
  const double tu = u - double(r0);
  const double tv = v - double(c0);
  auto lerp2 = [&](const std::vector<double>& g) {
    const auto at = [&](std::int64_t r, std::int64_t c) { return g[static_cast<std::size_t>(r * cols_ + c)]; };
    return (1 - tu) * ((1 - tv) * at(r0, c0) + tv * at(r0, c1)) + tu * ((1 - tv) * at(r1, c0) + tv * at(r1, c1));
  };
  double dy = lerp2(dy_);
  double dx = lerp2(dx_);
  if (angle_ != 0.0) {
    const double py = y - center_y_;
    const double px = x - center_x_;
    const double c = std::cos(angle_);
    const double s = std::sin(angle_);
    dy += (c * py - s * px) - py;
    dx += (s * py + c * px) - px;
  }
  return {dy, dx};
}

bool ElasticField::is_identity() const {
  if (angle_ != 0.0) return false;
  for (std::size_t i = 0; i < dy_.size(); ++i) {
    if (dy_[i] != 0.0 || dx_[i] != 0.0) return false;
  }
  return true;
}

FloatVolume apply_intensity(const FloatVolume& v, double scale, double shift) {
  FloatVolume out = v;
  for (auto& x : out.data()) x = static_cast<float>(std::clamp(double(x) * scale + shift, 0.0, 1.0));
  return out;
}

FloatVolume apply_section_artifacts(const FloatVolume& v, double missing_p, double noisy_p, double noise_sigma,
                                    Rng& rng) {
  FloatVolume out = v;
  const Coord s = v.shape();
  const auto plane = static_cast<std::size_t>(s[1] * s[2]);
  auto data = out.data();
  for (std::int64_t z = 0; z < s[0]; ++z) {
    auto section = data.subspan(static_cast<std::size_t>(z) * plane, plane);
    if (rng.bernoulli(missing_p)) {
      std::fill(section.begin(), section.end(), 0.0f);
    } else if (rng.bernoulli(noisy_p)) {
      for (auto& x : section) x = static_cast<float>(std::clamp(double(x) + rng.normal(0.0, noise_sigma), 0.0, 1.0));
    }
  }
  return out;
}

FloatVolume class_balance_weights(const LabelVolume& labels) {
  const auto n = static_cast<double>(labels.size());
  double p = 0;
  for (auto v : labels.data()) p += v ? 1 : 0;
  FloatVolume out(labels.roi(), labels.voxel_size(), 1.0f);
  if (p == 0 || p == n) return out;
  const auto w_pos = static_cast<float>(n / (2.0 * p));
  const auto w_neg = static_cast<float>(n / (2.0 * (n - p)));
  auto in = labels.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] ? w_pos : w_neg;
  return out;
}

double balanced_l2_loss(const FloatVolume& pred, const FloatVolume& target, const FloatVolume& weights) {
  if (pred.roi() != target.roi() || pred.roi() != weights.roi()) {
    throw Error(ErrorCode::shape, "loss inputs cover different rois",
                to_string(pred.roi()) + " / " + to_string(target.roi()) + " / " + to_string(weights.roi()));
  }
  double num = 0.0;
  double den = 0.0;
  auto p = pred.data();
  auto t = target.data();
  auto w = weights.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(p[i]) - double(t[i]);
    num += double(w[i]) * d * d;
    den += double(w[i]);
  }
  return den > 0 ? num / den : 0.0;
}

double l2_loss(const FloatVolume& pred, const FloatVolume& target) {
  return balanced_l2_loss(pred, target, FloatVolume(pred.roi(), pred.voxel_size(), 1.0f));
}

FloatVolume stdt_target(const LabelVolume& labels, const VoxelSize& voxel_size, double scale_nm) {
  std::size_t n_fg = 0;
  for (auto v : labels.data()) n_fg += v ? 1 : 0;
  if (n_fg == 0 || n_fg == labels.size()) {
    const float limit = std::nextafter(1.0f, 0.0f);
    return FloatVolume(labels.roi(), voxel_size, n_fg == 0 ? -limit : limit);
  }
  return stdt(sedt(labels, voxel_size), scale_nm);
}

BatchSampler::BatchSampler(std::shared_ptr<const FloatVolume> raw, std::shared_ptr<const LabelVolume> labels,
                           std::shared_ptr<const LabelVolume> aux_labels, Coord request_shape, Coord context,
                           AugmentConfig config)
    : raw_(std::move(raw)),
      labels_(std::move(labels)),
      aux_(std::move(aux_labels)),
      request_shape_(request_shape),
      context_(context),
      config_(config) {
  if (!raw_ || !labels_) throw Error(ErrorCode::config, "batch sampler needs raw and label sources");
  config_.validate();
  for (int a = 0; a < 3; ++a) {
    if (request_shape_[a] < 1) throw Error(ErrorCode::config, "request shape must be positive", to_string(request_shape_));
    if (context_[a] < 0) throw Error(ErrorCode::config, "context must be non-negative", to_string(context_));
    std::int64_t lo = std::max(raw_->roi().offset[a] + context_[a], labels_->roi().offset[a]);
    std::int64_t hi = std::min(raw_->roi().end()[a] - context_[a] - request_shape_[a],
                               labels_->roi().end()[a] - request_shape_[a]);
    if (aux_) {
      lo = std::max(lo, aux_->roi().offset[a]);
      hi = std::min(hi, aux_->roi().end()[a] - request_shape_[a]);
    }
    if (hi < lo) {
      throw Error(ErrorCode::sampling, "sources are too small for the requested batch shape", to_string(request_shape_));
    }
    offsets_.offset[a] = lo;
    offsets_.shape[a] = hi - lo + 1;
  }
}

std::optional<Roi> BatchSampler::draw(Rng& rng) const {
  Coord o{};
  for (int a = 0; a < 3; ++a) o[a] = offsets_.offset[a] + rng.uniform_int(offsets_.shape[a]);
  const Roi r(o, request_shape_);
  bool any = false;
  for (std::int64_t z = 0; z < r.shape[0] && !any; ++z)
    for (std::int64_t y = 0; y < r.shape[1] && !any; ++y)
      for (std::int64_t x = 0; x < r.shape[2] && !any; ++x)
        any = labels_->at({o[0] + z, o[1] + y, o[2] + x}) != 0;
  if (!any && rng.bernoulli(kRejectEmpty)) return std::nullopt;
  return r;
}

Batch BatchSampler::sample(std::uint64_t seed, int max_draws) const {
  Rng rng(seed);
  Batch b;
  b.rng_seed = seed;
  std::optional<Roi> roi;
  while (!roi) {
    if (b.draws >= max_draws) {
      throw Error(ErrorCode::sampling, "no batch accepted after " + std::to_string(max_draws) + " draws",
                  "seed " + std::to_string(seed));
    }
    ++b.draws;
    roi = draw(rng);
  }
  const Roi raw_roi = roi_grow(*roi, context_);
  b.raw = read_region(*raw_, raw_roi, 0.0f);
  b.labels = read_region(*labels_, *roi, std::uint8_t{0});
  if (aux_) b.aux_labels = read_region(*aux_, *roi, std::uint8_t{0});

  const bool square = request_shape_[1] == request_shape_[2] && context_[1] == context_[2];
  if (rng.bernoulli(config_.transpose_xy) && square) {
    b.raw = transpose_xy(b.raw);
    b.labels = transpose_xy(b.labels);
    if (b.aux_labels) b.aux_labels = transpose_xy(*b.aux_labels);
  }

  const auto field = ElasticField::random(raw_roi, config_.elastic_control_spacing, config_.elastic_jitter_sigma,
                                          config_.elastic_rotation_max, rng);
  b.raw = warp(b.raw, field, Interpolation::linear);
  b.labels = warp(b.labels, field, Interpolation::nearest);
  if (b.aux_labels) b.aux_labels = warp(*b.aux_labels, field, Interpolation::nearest);

  const double scale = rng.uniform(config_.intensity_scale_min, config_.intensity_scale_max);
  const double shift = rng.uniform(config_.intensity_shift_min, config_.intensity_shift_max);
  b.raw = apply_intensity(b.raw, scale, shift);

  b.raw = apply_section_artifacts(b.raw, config_.missing_section, config_.noisy_section, config_.noise_sigma, rng);
  return b;
}

}  // namespace cleftkit
