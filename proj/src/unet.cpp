#include "cleftkit/unet.hpp"

#include <fstream>

namespace cleftkit {

using json = nlohmann::json;

namespace {

constexpr const char* kAxisNames[3] = {"z", "y", "x"};

// 2D convolutions where the data is anisotropic, 3D once pooling has brought
// the voxels close to isotropic.
constexpr const char* kDtu2Like = R"({
  "name": "dtu2-like",
  "levels": [
    {"convs": [[1, 3, 3], [1, 3, 3]], "down": [1, 3, 3], "features": 12},
    {"convs": [[1, 3, 3], [1, 3, 3]], "down": [1, 3, 3], "features": 72},
    {"convs": [[3, 3, 3], [3, 3, 3]], "down": [3, 3, 3], "features": 432},
    {"convs": [[3, 3, 3], [3, 3, 3]], "features": 2592}
  ],
  "output_shape": [23, 218, 218],
  "production_output_shape": [71, 650, 650]
})";

// 3D convolutions throughout.
constexpr const char* kDtu1Like = R"({
  "name": "dtu1-like",
  "levels": [
    {"convs": [[3, 3, 3], [3, 3, 3]], "down": [1, 3, 3], "features": 12},
    {"convs": [[3, 3, 3], [3, 3, 3]], "down": [1, 3, 3], "features": 72},
    {"convs": [[3, 3, 3], [3, 3, 3]], "down": [2, 3, 3], "features": 432},
    {"convs": [[3, 3, 3], [3, 3, 3]], "features": 2592}
  ],
  "output_shape": [56, 56, 56]
})";

Coord coord_from_json(const json& j, const std::string& what) {
  const auto v = j.get<std::vector<std::int64_t>>();
  if (v.size() != 3) throw Error(ErrorCode::config, what + " must have 3 entries (z, y, x)");
  return {v[0], v[1], v[2]};
}

json coord_to_json(const Coord& c) { return json::array({c[0], c[1], c[2]}); }

std::vector<Coord> convs_from_json(const json& j, const std::string& what) {
  std::vector<Coord> out;
  for (const auto& k : j) out.push_back(coord_from_json(k, what));
  return out;
}

std::int64_t shrink(const std::vector<Coord>& convs, int axis) {
  std::int64_t s = 0;
  for (const auto& k : convs) s += k[axis] - 1;
  return s;
}

}  // namespace

void ArchSpec::validate() const {
  if (levels.empty()) return;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& lv = levels[i];
    const std::string where = (name.empty() ? std::string("arch") : name) + " level " + std::to_string(i);
    for (const auto& k : lv.convs) {
      for (auto e : k) if (e < 1) throw Error(ErrorCode::config, "kernel extents must be >= 1", where);
    }
    const bool last = i + 1 == levels.size();
    if (last && lv.down) throw Error(ErrorCode::config, "the last level cannot pool", where);
    if (!last && !lv.down) throw Error(ErrorCode::config, "every level but the last needs a down factor", where);
    if (lv.down) {
      for (auto f : *lv.down) if (f < 1) throw Error(ErrorCode::config, "down factors must be >= 1", where);
    }
    if (lv.decoder_convs) {
      if (last) throw Error(ErrorCode::config, "the last level has no decoder side", where);
      for (const auto& k : *lv.decoder_convs) {
        for (auto e : k) if (e < 1) throw Error(ErrorCode::config, "kernel extents must be >= 1", where);
      }
    }
  }
}

const std::vector<Coord>& ArchSpec::decoder_convs(std::size_t level) const {
  const auto& lv = levels.at(level);
  return lv.decoder_convs ? *lv.decoder_convs : lv.convs;
}

ArchSpec ArchSpec::from_json(const json& j) {
  ArchSpec a;
  try {
    a.name = j.value("name", "");
    for (const auto& lj : j.at("levels")) {
      UnetLevel lv;
      lv.convs = convs_from_json(lj.value("convs", json::array()), "conv kernel");
      if (lj.contains("down") && !lj.at("down").is_null()) lv.down = coord_from_json(lj.at("down"), "down factor");
      lv.features = lj.value("features", 0);
      a.levels.push_back(std::move(lv));
    }
    if (j.contains("decoder_convs")) {
      const auto& dj = j.at("decoder_convs");
      if (dj.size() + 1 != a.levels.size()) {
        throw Error(ErrorCode::config, "decoder_convs needs one entry per level except the last");
      }
      for (std::size_t i = 0; i < dj.size(); ++i) a.levels[i].decoder_convs = convs_from_json(dj[i], "decoder kernel");
    }
    if (j.contains("output_shape")) a.output_shape = coord_from_json(j.at("output_shape"), "output_shape");
    if (j.contains("production_output_shape")) {
      a.production_output_shape = coord_from_json(j.at("production_output_shape"), "production_output_shape");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("malformed architecture spec: ") + e.what());
  }
  a.validate();
  return a;
}

json ArchSpec::to_json() const {
  json j;
  j["name"] = name;
  json lvls = json::array();
  bool any_decoder = false;
  for (const auto& lv : levels) {
    json lj;
    json convs = json::array();
    for (const auto& k : lv.convs) convs.push_back(coord_to_json(k));
    lj["convs"] = convs;
    if (lv.down) lj["down"] = coord_to_json(*lv.down);
    lj["features"] = lv.features;
    lvls.push_back(lj);
    any_decoder = any_decoder || lv.decoder_convs.has_value();
  }
  j["levels"] = lvls;
  if (any_decoder) {
    json dec = json::array();
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      json convs = json::array();
      for (const auto& k : decoder_convs(i)) convs.push_back(coord_to_json(k));
      dec.push_back(convs);
    }
    j["decoder_convs"] = dec;
  }
  if (output_shape) j["output_shape"] = coord_to_json(*output_shape);
  if (production_output_shape) j["production_output_shape"] = coord_to_json(*production_output_shape);
  return j;
}

ArchSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open architecture spec", path.string());
  try {
    return ArchSpec::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("invalid architecture json: ") + e.what(), path.string());
  }
}

ArchSpec arch_preset(const std::string& name) {
  if (name == "dtu1-like") return ArchSpec::from_json(json::parse(kDtu1Like));
  if (name == "dtu2-like") return ArchSpec::from_json(json::parse(kDtu2Like));
  throw Error(ErrorCode::config, "unknown architecture preset", name);
}

std::vector<std::string> arch_preset_names() { return {"dtu1-like", "dtu2-like"}; }

Coord valid_output_shape(const ArchSpec& a, const Coord& input_shape) {
  Coord s = input_shape;
  const std::size_t n = a.levels.size();
  auto check = [&](const std::string& layer) {
    for (int ax = 0; ax < 3; ++ax) {
      if (s[ax] < 1) {
        throw Error(ErrorCode::shape,
                    "input " + to_string(input_shape) + " shrinks to " + std::to_string(s[ax]) + " along " +
                        kAxisNames[ax] + " at " + layer,
                    layer + ":" + kAxisNames[ax]);
      }
    }
  };
  auto convolve = [&](const std::vector<Coord>& convs, const std::string& prefix) {
    for (std::size_t c = 0; c < convs.size(); ++c) {
      for (int ax = 0; ax < 3; ++ax) s[ax] -= convs[c][ax] - 1;
      check(prefix + ".conv" + std::to_string(c));
    }
  };
  check("input");
  if (n == 0) return s;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    convolve(a.levels[i].convs, prefix);
    const Coord& f = *a.levels[i].down;
    for (int ax = 0; ax < 3; ++ax) {
      if (s[ax] % f[ax] != 0) {
        throw Error(ErrorCode::shape,
                    "size " + std::to_string(s[ax]) + " along " + kAxisNames[ax] + " is not divisible by pooling factor " +
                        std::to_string(f[ax]) + " at " + prefix + ".pool",
                    prefix + ".pool:" + kAxisNames[ax]);
      }
      s[ax] /= f[ax];
    }
  }
  convolve(a.levels[n - 1].convs, "bottom");
  for (std::size_t i = n - 1; i-- > 0;) {
    const Coord& f = *a.levels[i].down;
    for (int ax = 0; ax < 3; ++ax) s[ax] *= f[ax];
    convolve(a.decoder_convs(i), "dec" + std::to_string(i));
  }
  return s;
}

Coord required_input_shape(const ArchSpec& a, const Coord& desired_output_shape) {
  const std::size_t n = a.levels.size();
  Coord s{};
  for (int ax = 0; ax < 3; ++ax) {
    std::int64_t v = std::max<std::int64_t>(desired_output_shape[ax], 1);
    if (n > 0) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        v += shrink(a.decoder_convs(i), ax);
        v = ceil_div(v, (*a.levels[i].down)[ax]);
      }
      v += shrink(a.levels[n - 1].convs, ax);
      for (std::size_t i = n - 1; i-- > 0;) {
        v = v * (*a.levels[i].down)[ax] + shrink(a.levels[i].convs, ax);
      }
    }
    s[ax] = v;
  }
  return s;
}

Coord context_per_side(const ArchSpec& a, const Coord& output_shape) {
  const Coord in = required_input_shape(a, output_shape);
  Coord c{};
  for (int ax = 0; ax < 3; ++ax) {
    const auto diff = in[ax] - output_shape[ax];
    if (diff % 2 != 0) {
      throw Error(ErrorCode::asymmetric_context,
                  "input " + to_string(in) + " and output " + to_string(output_shape) + " differ by an odd amount along " +
                      kAxisNames[ax],
                  kAxisNames[ax]);
    }
    c[ax] = diff / 2;
  }
  return c;
}

FovReport physical_fov(const ArchSpec& a, const VoxelSize& voxel_size) {
  FovReport report;
  Coord fov{1, 1, 1};
  Coord step{1, 1, 1};
  auto emit = [&](std::string name) {
    FovLayer layer;
    layer.name = std::move(name);
    layer.voxel_fov = fov;
    for (std::size_t ax = 0; ax < 3; ++ax) layer.physical_nm[ax] = double(fov[ax]) * voxel_size[ax];
    const auto [lo, hi] = std::minmax_element(layer.physical_nm.begin(), layer.physical_nm.end());
    layer.isotropy = *hi / *lo;
    report.layers.push_back(std::move(layer));
  };
  auto convolve = [&](const std::vector<Coord>& convs, const std::string& prefix) {
    for (std::size_t c = 0; c < convs.size(); ++c) {
      for (int ax = 0; ax < 3; ++ax) fov[ax] += (convs[c][ax] - 1) * step[ax];
      emit(prefix + ".conv" + std::to_string(c));
    }
  };
  const std::size_t n = a.levels.size();
  if (n == 0) return report;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    convolve(a.levels[i].convs, prefix);
    const Coord& f = *a.levels[i].down;
    for (int ax = 0; ax < 3; ++ax) {
      fov[ax] += (f[ax] - 1) * step[ax];
      step[ax] *= f[ax];
    }
    emit(prefix + ".pool");
  }
  convolve(a.levels[n - 1].convs, "bottom");
  for (std::size_t i = n - 1; i-- > 0;) {
    const Coord& f = *a.levels[i].down;
    for (int ax = 0; ax < 3; ++ax) step[ax] /= f[ax];
    const std::string prefix = "dec" + std::to_string(i);
    emit(prefix + ".up");
    convolve(a.decoder_convs(i), prefix);
  }
  return report;
}

}  // namespace cleftkit
