// NumPy-facing wrappers over the core library. Arrays cross the boundary as
// C-contiguous complex128 (H, W) images or (C, H, W) coil stacks, and masks
// as bool (H, W).

#include "mrxfer/cascade.hpp"
#include "mrxfer/cs.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/errors.hpp"
#include "mrxfer/experiment.hpp"
#include "mrxfer/io.hpp"
#include "mrxfer/metrics.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

namespace py = pybind11;
using namespace mrxfer;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;
using BArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

std::vector<cplx> copy_values(const CArray &a)
{
  return {a.data(), a.data() + a.size()};
}

ComplexImage to_image(const CArray &a)
{
  if (a.ndim() != 2) {
    throw std::invalid_argument("expected a 2-D complex array");
  }
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), copy_values(a)};
}

/// A 2-D array is promoted to a single coil.
template <class Domain>
CoilArray<Domain> to_coils(const CArray &a)
{
  if (a.ndim() == 2) {
    return CoilArray<Domain>(1, a.shape(0), a.shape(1), copy_values(a));
  }
  if (a.ndim() != 3) {
    throw std::invalid_argument("expected a 2-D or 3-D complex array");
  }
  return CoilArray<Domain>(a.shape(0), a.shape(1), a.shape(2), copy_values(a));
}

CArray from_values(std::span<const cplx> v, std::vector<py::ssize_t> shape)
{
  CArray out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

CArray from_image(const ComplexImage &img)
{
  return from_values(img.data(), {py::ssize_t(img.height()), py::ssize_t(img.width())});
}

template <class Domain>
CArray from_coils(const CoilArray<Domain> &a, bool squeeze)
{
  if (squeeze && a.coils() == 1) {
    return from_values(a.data(), {py::ssize_t(a.height()), py::ssize_t(a.width())});
  }
  return from_values(a.data(), {py::ssize_t(a.coils()), py::ssize_t(a.height()), py::ssize_t(a.width())});
}

SamplingMask to_mask(const BArray &m)
{
  if (m.ndim() != 2) {
    throw std::invalid_argument("expected a 2-D boolean mask");
  }
  SamplingMask mask;
  mask.height = m.shape(0);
  mask.width = m.shape(1);
  mask.pattern.assign(m.data(), m.data() + m.size());
  mask.accel = mask.count() ? double(mask.pattern.size()) / double(mask.count()) : 0.0;
  return mask;
}

BArray from_mask(const SamplingMask &m)
{
  BArray out({py::ssize_t(m.height), py::ssize_t(m.width)});
  std::transform(m.pattern.begin(), m.pattern.end(), out.mutable_data(), [](std::uint8_t v) { return v != 0; });
  return out;
}

CoilSensitivities to_maps(const CArray &a)
{
  return {to_coils<ImageDomain>(a)};
}

} // namespace

PYBIND11_MODULE(_mrxfer, m)
{
  m.doc() = "Bindings for the mrxfer reconstruction library.";

  py::register_exception<ConstraintError>(m, "ConstraintError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  m.def(
      "fft2c",
      [](const CArray &x) { return from_coils(fft2c(to_coils<ImageDomain>(x)), x.ndim() == 2); },
      py::arg("image"),
      "Centered orthonormal 2-D FFT over the last two axes.");
  m.def(
      "ifft2c",
      [](const CArray &k) { return from_coils(ifft2c(to_coils<KSpaceDomain>(k)), k.ndim() == 2); },
      py::arg("kspace"));

  m.def(
      "generate_mask",
      [](std::size_t h, std::size_t w, double accel, std::size_t calib, std::uint64_t seed) {
        return from_mask(generate_mask(h, w, accel, calib, seed));
      },
      py::arg("height"), py::arg("width"), py::arg("accel"), py::arg("calib_size") = 0, py::arg("seed") = 0);
  m.def("satisfies_poisson_disc", [](const BArray &mask) { return satisfies_poisson_disc(to_mask(mask)); });

  m.def(
      "make_phantom",
      [](std::size_t h, std::size_t w, const std::string &kind, std::uint64_t seed) {
        return from_image(make_phantom(h, w, parse_domain_kind(kind), seed));
      },
      py::arg("height"), py::arg("width"), py::arg("kind") = "phantom", py::arg("seed") = 0);
  m.def(
      "coil_maps",
      [](std::size_t h, std::size_t w, std::size_t coils, std::uint64_t seed) {
        return from_coils(analytic_coil_maps(h, w, coils, seed).maps, false);
      },
      py::arg("height"), py::arg("width"), py::arg("coils"), py::arg("seed") = 0);
  m.def(
      "apply_coils",
      [](const CArray &x, const CArray &maps) { return from_coils(apply_coils(to_image(x), to_maps(maps)), false); },
      py::arg("image"), py::arg("maps"));

  m.def(
      "undersample",
      [](const CArray &k, const BArray &mask) {
        return from_coils(undersample(to_coils<KSpaceDomain>(k), to_mask(mask)), k.ndim() == 2);
      },
      py::arg("kspace"), py::arg("mask"));

  m.def(
      "cs_reconstruct",
      [](const CArray &y_u, const BArray &mask, double lambda_l1, int iters) {
        CsParams p;
        p.lambda_l1 = lambda_l1;
        p.iters = iters;
        const CsResult r = nlcg_reconstruct(to_coils<KSpaceDomain>(y_u), to_mask(mask), p);
        return py::make_tuple(from_image(r.image), r.objective);
      },
      py::arg("kspace"), py::arg("mask"), py::arg("lambda_l1") = CsParams{}.lambda_l1,
      py::arg("iters") = CsParams{}.iters,
      "Returns (image, objective history).");

  m.def(
      "spirit_reconstruct",
      [](const CArray &y_u, const BArray &mask, std::size_t calib, std::size_t width, double tikhonov,
         double lambda_l1, int iters) {
        const KSpaceGrid k = to_coils<KSpaceDomain>(y_u);
        const SamplingMask sm = to_mask(mask);
        const SpiritKernel kernel = calibrate_kernel(extract_calibration(k, sm, calib), width, tikhonov);
        return from_coils(pocs_spirit(k, sm, kernel, lambda_l1, iters).images, false);
      },
      py::arg("kspace"), py::arg("mask"), py::arg("calib_size"), py::arg("kernel_width") = kDefaultKernelWidth,
      py::arg("tikhonov") = kDefaultTikhonov, py::arg("lambda_l1") = 1e-3, py::arg("iters") = 30,
      "Calibrates a kernel from the scan and runs POCS. Returns coil images.");

  m.def(
      "psnr", [](const CArray &ref, const CArray &test) { return psnr(to_image(ref), to_image(test)); },
      py::arg("ref"), py::arg("test"));
  m.def(
      "ssim",
      [](const CArray &ref, const CArray &test, std::optional<double> range) {
        return ssim(to_image(ref), to_image(test), range);
      },
      py::arg("ref"), py::arg("test"), py::arg("dynamic_range") = py::none());
  m.def(
      "convergence_samples",
      [](const std::vector<std::pair<double, double>> &curve, double ref_psnr) {
        std::vector<ConvergencePoint> pts;
        for (const auto &[n, p] : curve) {
          pts.push_back({n, p});
        }
        const ConvergenceResult r = convergence_samples(pts, ref_psnr);
        return py::make_tuple(r.n_tune, r.converged);
      },
      py::arg("curve"), py::arg("ref_psnr"),
      "curve is a list of (n_tune, psnr) pairs. Returns (n_tune, converged).");

  m.def(
      "load_array",
      [](const std::filesystem::path &path) {
        const Mrx1Tensor t = load_tensor(path);
        std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
        return from_values(decode_complex(t), shape);
      },
      py::arg("path"), "Reads a complex .mrx tensor.");
  m.def(
      "save_array",
      [](const std::filesystem::path &path, const CArray &a) {
        std::vector<std::uint64_t> dims(a.shape(), a.shape() + a.ndim());
        save_tensor(path, encode_complex(std::span<const cplx>(a.data(), a.size()), dims));
      },
      py::arg("path"), py::arg("array"), "Writes a complex128 .mrx tensor.");
  m.def(
      "load_mask", [](const std::filesystem::path &path) { return from_mask(decode_mask(load_tensor(path))); },
      py::arg("path"));

  py::class_<CascadeModel>(m, "CascadeModel")
      .def_static(
          "load", [](const std::filesystem::path &p) { return load_model(p); }, py::arg("path"))
      .def("save", [](const CascadeModel &model, const std::filesystem::path &p) { save_model(p, model); })
      .def_property_readonly("stages", &CascadeModel::stages)
      .def_property_readonly("coils", [](const CascadeModel &model) { return model.coils; })
      .def_property_readonly("mode", [](const CascadeModel &model) { return to_string(model.mode); })
      .def_readonly("lambda_dc", &CascadeModel::lambda_dc)
      .def(
          "reconstruct",
          [](const CascadeModel &model, const CArray &y_u, const BArray &mask, std::optional<CArray> maps) {
            std::optional<CoilSensitivities> s;
            if (maps) {
              s = to_maps(*maps);
            }
            const CascadeOutput out =
                cascade_forward(to_coils<KSpaceDomain>(y_u), to_mask(mask), model, s ? &*s : nullptr);
            return from_image(out.image);
          },
          py::arg("kspace"), py::arg("mask"), py::arg("coil_maps") = py::none());
  m.def(
      "make_cascade",
      [](std::size_t subnets, std::size_t hidden, std::size_t layers, double lambda_dc, std::uint64_t seed) {
        ArchitectureConfig a;
        a.subnets = subnets;
        a.hidden_channels = hidden;
        a.hidden_layers = layers;
        a.lambda_dc = lambda_dc;
        a.seed = seed;
        return make_cascade(a);
      },
      py::arg("subnets") = 5, py::arg("hidden_channels") = 64, py::arg("hidden_layers") = 3,
      py::arg("lambda_dc") = kHardDataConsistency, py::arg("seed") = 0,
      "Untrained single-coil cascade.");

  m.def(
      "run_experiment",
      [](const std::string &config_json) {
        const GridConfig g = parse_grid_config(config_json);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(g);
        }
        return py::make_tuple(metrics_csv(r.records), convergence_csv(r.convergence));
      },
      py::arg("config_json"), "Runs a grid config. Returns (metrics_csv, convergence_csv) text.");
}
