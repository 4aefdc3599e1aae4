#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "unroll/cli.hpp"
#include "unroll/denoiser.hpp"
#include "unroll/error.hpp"
#include "unroll/image_io.hpp"
#include "unroll/metrics.hpp"
#include "unroll/operators.hpp"
#include "unroll/solver.hpp"
#include "unroll/unrolled.hpp"

namespace py = pybind11;
using namespace unroll;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a, double peak) {
  if (a.ndim() != 2) throw Error("expected a 2-D array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return Image(h, w, std::vector<double>(a.data(), a.data() + a.size()), peak);
}

Array to_array(const Image& img) {
  Array a({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), a.mutable_data());
  return a;
}

Kernel to_kernel(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw Error("kernel must be a square 2-D array");
  return Kernel(static_cast<int>(a.shape(0)), std::vector<double>(a.data(), a.data() + a.size()));
}

Array kernel_array(const Kernel& k) {
  Array a({k.size(), k.size()});
  std::copy(k.taps().begin(), k.taps().end(), a.mutable_data());
  return a;
}

py::dict trace_dict(const SolverTrace& tr) {
  std::vector<int> t;
  std::vector<double> xi, dx2, gap, c1_resid;
  std::vector<bool> partial;
  for (const TraceRecord& r : tr.records) {
    t.push_back(r.t);
    xi.push_back(r.xi);
    dx2.push_back(r.dx2);
    gap.push_back(r.gap);
    c1_resid.push_back(r.c1_resid);
    partial.push_back(r.partial);
  }
  py::dict d;
  d["t"] = t;
  d["xi"] = xi;
  d["dx2"] = dx2;
  d["gap"] = gap;
  d["c1_resid"] = c1_resid;
  d["partial"] = partial;
  d["op_norm_sq"] = tr.op_norm_sq;
  d["c1"] = tr.c1;
  return d;
}

std::vector<std::tuple<std::string, std::string, std::string>> checks(const std::vector<CheckResult>& rs) {
  std::vector<std::tuple<std::string, std::string, std::string>> out;
  for (const CheckResult& r : rs) out.emplace_back(r.name, to_string(r.status), r.detail);
  return out;
}

SolverMode parse_mode(const std::string& s) {
  if (s == "hqs") return SolverMode::GradStep;
  if (s == "hqs_cg") return SolverMode::ExactCG;
  if (s == "admm") return SolverMode::Admm;
  throw Error("unknown solver mode '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Image restoration by half-quadratic splitting and its unrolled network";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", error.ptr());

  m.def("gaussian_kernel", [](int size, double sigma) { return kernel_array(gaussian_kernel(size, sigma)); },
        py::arg("size"), py::arg("sigma"));

  py::class_<DegradationOp>(m, "Operator")
      .def_static("identity", [](int h, int w) { return DegradationOp::identity({h, w}); }, py::arg("height"),
                  py::arg("width"))
      .def_static(
          "blur", [](const Array& k, int h, int w) { return DegradationOp::blur(to_kernel(k), {h, w}); },
          py::arg("kernel"), py::arg("height"), py::arg("width"))
      .def_static(
          "blur_downsample",
          [](const Array& k, int factor, int h, int w) {
            return DegradationOp::blur_downsample(to_kernel(k), factor, {h, w});
          },
          py::arg("kernel"), py::arg("factor"), py::arg("height"), py::arg("width"))
      .def_static("bicubic", [](int factor, int h, int w) { return DegradationOp::bicubic(factor, {h, w}); },
                  py::arg("factor"), py::arg("height"), py::arg("width"))
      .def_property_readonly("input_shape",
                             [](const DegradationOp& op) { return std::pair(op.input_shape().height, op.input_shape().width); })
      .def_property_readonly("output_shape",
                             [](const DegradationOp& op) { return std::pair(op.output_shape().height, op.output_shape().width); })
      .def("apply", [](const DegradationOp& op, const Array& x) { return to_array(apply(op, to_image(x, 255.0))); })
      .def("adjoint", [](const DegradationOp& op, const Array& y) { return to_array(adjoint(op, to_image(y, 255.0))); })
      .def("norm_sq", [](const DegradationOp& op, int iters) { return operator_norm_sq(op, iters).value; },
           py::arg("iters") = 100);

  py::class_<Denoiser>(m, "Denoiser")
      .def_static("quadratic", &Denoiser::quadratic, py::arg("lam"))
      .def_static("dct", &Denoiser::dct, py::arg("patch"), py::arg("tau"))
      .def_static("tv", &Denoiser::tv, py::arg("lambda_tv"), py::arg("inner_iters") = 50)
      .def_static("zero", &Denoiser::zero)
      .def_property_readonly("kind", [](const Denoiser& d) { return std::string(to_string(d.kind())); })
      .def("__call__",
           [](const Denoiser& d, const Array& x, double eta, double peak) {
             return to_array(denoise(d, to_image(x, peak), eta));
           },
           py::arg("x"), py::arg("eta"), py::arg("peak") = 255.0);

  m.def("matched_lambda", &matched_lambda, py::arg("denoiser"), py::arg("eta"));

  m.def(
      "solve",
      [](const Array& y, const DegradationOp& op, const Denoiser& d, double eta, std::optional<double> lam,
         std::optional<double> delta, int iters, double tol, const std::string& mode, double peak) {
        const Problem p{to_image(y, peak), op, lam.value_or(matched_lambda(d, eta)), eta};
        SolverConfig cfg;
        cfg.mode = parse_mode(mode);
        cfg.delta = delta.value_or(0.9 * max_step(p));
        cfg.max_iters = iters;
        cfg.tol = tol;
        SolveResult r;
        {
          py::gil_scoped_release release;
          r = solve(p, cfg, d);
        }
        py::dict out;
        out["x"] = to_array(r.x);
        out["v"] = to_array(r.v);
        out["iterations"] = r.trace.iterations;
        out["converged"] = r.trace.converged;
        out["trace"] = trace_dict(r.trace);
        out["checks"] = checks(diagnose(r.trace));
        return out;
      },
      py::arg("y"), py::arg("op"), py::arg("denoiser"), py::arg("eta") = 0.5, py::arg("lam") = py::none(),
      py::arg("delta") = py::none(), py::arg("iters") = 100, py::arg("tol") = 1e-8, py::arg("mode") = "hqs",
      py::arg("peak") = 255.0);

  m.def("max_step", py::overload_cast<double, double>(&max_step), py::arg("op_norm_sq"), py::arg("eta"));

  m.def(
      "diagnose_csv",
      [](const std::string& text) {
        std::istringstream in(text);
        return checks(diagnose(read_trace_csv(in)));
      },
      py::arg("text"));

  m.def("psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_image(a, peak), to_image(b, peak)); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 255.0);
  m.def("ssim", [](const Array& a, const Array& b, double peak) { return ssim(to_image(a, peak), to_image(b, peak)); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 255.0);

  m.def("load_image", [](const std::filesystem::path& p) { return to_array(load_image(p)); }, py::arg("path"));
  m.def(
      "save_image", [](const Array& a, const std::filesystem::path& p) { save_image(to_image(a, 255.0), p); },
      py::arg("image"), py::arg("path"));

  py::class_<NetParams>(m, "UnrolledNet")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def_readonly("stages", &NetParams::K)
      .def_readonly("eta", &NetParams::eta)
      .def_property_readonly("num_params", &NetParams::flat_size)
      .def(
          "__call__",
          [](const NetParams& net, const Array& y, const DegradationOp& op, double peak) {
            return to_array(unrolled_forward(net, to_image(y, peak), op));
          },
          py::arg("y"), py::arg("op"), py::arg("peak") = 255.0);

  m.def(
      "run_cli",
      [](const std::string& command, std::optional<std::filesystem::path> config,
         std::optional<std::filesystem::path> input, std::optional<std::filesystem::path> output,
         std::optional<std::filesystem::path> truth, std::optional<std::uint64_t> seed) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run({command, config, input, output, truth, seed}, out, err);
        }
        return std::tuple(code, out.str(), err.str());
      },
      py::arg("command"), py::arg("config") = py::none(), py::arg("input") = py::none(), py::arg("output") = py::none(),
      py::arg("truth") = py::none(), py::arg("seed") = py::none());

#ifdef UNROLL_VERSION
  m.attr("__version__") = UNROLL_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
