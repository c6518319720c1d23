// numpy-facing bindings. Arrays are (z, y, x), C order, with the origin at 0.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cleftkit/augment.hpp"
#include "cleftkit/inference.hpp"
#include "cleftkit/metrics.hpp"
#include "cleftkit/n5.hpp"
#include "cleftkit/phantom.hpp"
#include "cleftkit/pyramid.hpp"
#include "cleftkit/sdt.hpp"
#include "cleftkit/unet.hpp"

namespace py = pybind11;
using namespace cleftkit;

namespace {

using VS = std::array<double, 3>;

VoxelSize vs_of(const VS& v) { return VoxelSize(v[0], v[1], v[2]); }

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <class T>
Volume<T> to_volume(const Array<T>& a, const VS& vs = {40, 4, 4}) {
  if (a.ndim() != 3) throw Error(ErrorCode::shape, "expected a 3D array", std::to_string(a.ndim()) + "D");
  const Roi r({0, 0, 0}, {a.shape(0), a.shape(1), a.shape(2)});
  return Volume<T>(r, vs_of(vs), std::vector<T>(a.data(), a.data() + a.size()));
}

template <class T>
Array<T> to_array(const Volume<T>& v) {
  const Coord s = v.shape();
  Array<T> out({s[0], s[1], s[2]});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

py::object any_to_array(const AnyVolume& v) {
  return std::visit([](const auto& vol) -> py::object { return to_array(vol); }, v);
}

// A preset name or JSON text.
ArchSpec arch_of(const std::string& s) {
  for (const auto& name : arch_preset_names())
    if (name == s) return arch_preset(s);
  return ArchSpec::from_json(nlohmann::json::parse(s));
}

Roi roi_of(const Coord& offset, const Coord& shape) { return Roi(offset, shape); }

py::dict roi_dict(const Roi& r) {
  py::dict d;
  d["offset"] = r.offset;
  d["shape"] = r.shape;
  return d;
}

template <class T>
void write_dataset_t(const std::filesystem::path& path, const Array<T>& a, const Coord& chunk,
                     const std::string& compression, const VS& vs) {
  n5::DatasetAttributes attrs;
  attrs.dimensions = {a.shape(0), a.shape(1), a.shape(2)};
  attrs.chunk_size = chunk;
  attrs.data_type = data_type_of<T>();
  attrs.compression = compression == "raw" ? n5::Compression::raw : n5::Compression::gzip;
  if (compression != "raw" && compression != "gzip") throw Error(ErrorCode::config, "unknown compression", compression);
  auto ds = n5::Dataset::create(path, attrs);
  ds.set_voxel_size(vs_of(vs));
  ds.write(to_volume(a, vs));
}

}  // namespace

PYBIND11_MODULE(_cleftkit, m) {
  m.doc() = "Blockwise synaptic-cleft prediction toolkit";

  static py::exception<Error> error(m, "CleftkitError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(py::str(e.what()));
      exc.attr("code") = std::string(to_string(e.code()));
      exc.attr("context") = e.context();
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  // distance transforms
  m.def("sedt", [](const Array<std::uint8_t>& labels, const VS& vs) { return to_array(sedt(to_volume(labels, vs), vs_of(vs))); },
        py::arg("labels"), py::arg("voxel_size") = VS{40, 4, 4});
  m.def("signed_distance",
        [](const Array<std::uint8_t>& labels, const VS& vs) { return to_array(signed_distance(to_volume(labels, vs), vs_of(vs))); },
        py::arg("labels"), py::arg("voxel_size") = VS{40, 4, 4});
  m.def("stdt", [](const Array<float>& d, double s) { return to_array(stdt(to_volume(d), s)); }, py::arg("sedt"),
        py::arg("scale_nm") = 50.0);
  m.def("threshold_to_labels", [](const Array<float>& v, float t) { return to_array(threshold_to_labels(to_volume(v), t)); },
        py::arg("volume"), py::arg("t") = 0.0f);

  // metrics
  m.def(
      "cleft_score",
      [](const Array<std::uint8_t>& pred, const Array<std::uint8_t>& truth, const VS& vs,
         std::optional<Array<std::uint8_t>> ignore) {
        std::optional<LabelVolume> ig;
        if (ignore) ig = to_volume(*ignore, vs);
        const auto s = cleft_score(to_volume(pred, vs), to_volume(truth, vs), vs_of(vs), ig ? &*ig : nullptr);
        py::dict d;
        d["fpd"] = s.fpd_nm;
        d["fnd"] = s.fnd_nm;
        d["cremi_score"] = s.cremi_score_nm;
        d["n_pred_pos"] = s.n_pred_pos;
        d["n_true_pos"] = s.n_true_pos;
        return d;
      },
      py::arg("pred"), py::arg("truth"), py::arg("voxel_size") = VS{40, 4, 4}, py::arg("ignore") = py::none());
  m.def(
      "psf_density",
      [](const Array<float>& pred, const VS& sigma_nm, const VS& vs, const VS& out_vs) {
        return to_array(psf_density(to_volume(pred, vs), sigma_nm, vs_of(out_vs)));
      },
      py::arg("pred"), py::arg("sigma_nm"), py::arg("voxel_size"), py::arg("output_voxel_size"));

  // training targets
  m.def("class_balance_weights", [](const Array<std::uint8_t>& l) { return to_array(class_balance_weights(to_volume(l))); });
  m.def("balanced_l2_loss", [](const Array<float>& p, const Array<float>& t, const Array<float>& w) {
    return balanced_l2_loss(to_volume(p), to_volume(t), to_volume(w));
  });

  // U-Net geometry
  m.def("arch_preset", [](const std::string& name) { return arch_preset(name).to_json().dump(); });
  m.def("valid_output_shape", [](const std::string& arch, const Coord& in) { return valid_output_shape(arch_of(arch), in); });
  m.def("required_input_shape",
        [](const std::string& arch, const Coord& out) { return required_input_shape(arch_of(arch), out); });
  m.def("context_per_side", [](const std::string& arch, const Coord& out) { return context_per_side(arch_of(arch), out); });
  m.def(
      "physical_fov",
      [](const std::string& arch, const VS& vs) {
        py::list layers;
        for (const auto& l : physical_fov(arch_of(arch), vs_of(vs)).layers) {
          py::dict d;
          d["name"] = l.name;
          d["voxel_fov"] = l.voxel_fov;
          d["physical_nm"] = l.physical_nm;
          d["isotropy"] = l.isotropy;
          layers.append(d);
        }
        return layers;
      },
      py::arg("arch"), py::arg("voxel_size") = VS{40, 4, 4});

  // planning
  m.def(
      "plan_blocks",
      [](const Coord& total, const Coord& block, const Coord& context, std::optional<Array<std::uint8_t>> mask,
         const Coord& factors) {
        std::optional<BlockMask> bm;
        if (mask) bm = BlockMask{to_volume(*mask), factors};
        py::list out;
        for (const auto& p : plan_blocks(roi_of({0, 0, 0}, total), block, context, bm ? &*bm : nullptr)) {
          py::dict d;
          d["block_id"] = p.block_id;
          d["output"] = roi_dict(p.output_roi);
          d["input"] = roi_dict(p.input_roi);
          d["masked_in"] = p.masked_in;
          out.append(d);
        }
        return out;
      },
      py::arg("total"), py::arg("block"), py::arg("context") = Coord{0, 0, 0}, py::arg("mask") = py::none(),
      py::arg("factors") = Coord{1, 1, 1});
  m.def("eta_seconds", &eta_seconds, py::arg("total_voxels"), py::arg("workers"), py::arg("voxels_per_second_per_worker"));

  // pyramid
  m.def("downscale", [](const Array<float>& v, const Coord& f) { return to_array(downscale(to_volume(v), f)); });
  m.def("build_mask",
        [](const Array<float>& v, double lo, double hi) { return to_array(build_mask(to_volume(v), lo, hi)); });

  // N5
  m.def(
      "write_dataset",
      [](const std::filesystem::path& path, const py::array& a, const Coord& chunk, const std::string& compression,
         const VS& vs) {
        const auto is = [&](auto tag) { return a.dtype().equal(py::dtype::of<decltype(tag)>()); };
        if (is(std::uint8_t{})) write_dataset_t(path, Array<std::uint8_t>(a), chunk, compression, vs);
        else if (is(std::uint16_t{})) write_dataset_t(path, Array<std::uint16_t>(a), chunk, compression, vs);
        else if (is(std::uint32_t{})) write_dataset_t(path, Array<std::uint32_t>(a), chunk, compression, vs);
        else if (is(std::uint64_t{})) write_dataset_t(path, Array<std::uint64_t>(a), chunk, compression, vs);
        else if (is(float{})) write_dataset_t(path, Array<float>(a), chunk, compression, vs);
        else if (is(double{})) write_dataset_t(path, Array<double>(a), chunk, compression, vs);
        else throw Error(ErrorCode::type, "unsupported dtype", std::string(py::str(a.dtype())));
      },
      py::arg("path"), py::arg("array"), py::arg("chunk") = Coord{64, 64, 64}, py::arg("compression") = "gzip",
      py::arg("voxel_size") = VS{40, 4, 4});
  m.def(
      "read_dataset",
      [](const std::filesystem::path& path) {
        const auto ds = n5::Dataset::open(path);
        return any_to_array(ds.read_roi(ds.bounds()));
      },
      py::arg("path"));
  m.def("ensure_container", [](const std::filesystem::path& root) { n5::Container c(root); });

  m.def(
      "make_phantom",
      [](const Coord& shape, std::uint64_t seed, const VS& vs) {
        const auto p = make_phantom(shape, seed, vs_of(vs));
        py::dict d;
        d["raw"] = to_array(p.raw);
        d["clefts"] = to_array(p.clefts);
        d["sample"] = to_array(p.sample);
        return d;
      },
      py::arg("shape"), py::arg("seed") = 0, py::arg("voxel_size") = VS{40, 4, 4});
}
