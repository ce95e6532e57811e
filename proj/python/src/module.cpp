#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "dnet/cli.hpp"
#include "dnet/error.hpp"
#include "dnet/evaluator.hpp"
#include "dnet/image_io.hpp"
#include "dnet/model_io.hpp"
#include "dnet/network.hpp"
#include "dnet/noise.hpp"
#include "dnet/synth.hpp"

namespace py = pybind11;
using namespace dnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GrayImage to_image(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  GrayImage img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array to_array(const GrayImage& img) {
  Array out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

NoiseSpec make_spec(std::optional<double> sigma, std::optional<double> peak) {
  if (sigma.has_value() == peak.has_value()) throw InvalidArgument("give exactly one of sigma or peak");
  return sigma ? NoiseSpec::gaussian(*sigma) : NoiseSpec::poisson(*peak);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gradual-residual image denoiser for Gaussian and Poisson noise.";

  // translators are tried newest first, so the base class goes first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<DenoiseModel>(m, "Model")
      .def_static(
          "create",
          [](std::size_t depth, std::size_t kernels, bool skip, std::uint64_t seed, std::optional<double> sigma,
             std::optional<double> peak) {
            const NetworkConfig c = NetworkConfig::from_kernels(depth, kernels, skip, seed);
            return DenoiseModel{c, init_weights(c), make_spec(sigma, peak), {}};
          },
          py::arg("depth") = 20, py::arg("kernels") = 64, py::arg("skip") = true, py::arg("seed") = 0,
          py::arg("sigma") = py::none(), py::arg("peak") = py::none(), "Untrained model with He-initialized weights.")
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"))
      .def("save", [](const DenoiseModel& self, const std::filesystem::path& p) { save_model(self, p); },
           py::arg("path"))
      .def(
          "denoise",
          [](const DenoiseModel& self, const Array& noisy, std::size_t pad) {
            const GrayImage img = to_image(noisy);
            GrayImage out;
            {
              py::gil_scoped_release release;
              out = denoise_image(img, self, pad);
            }
            return to_array(out);
          },
          py::arg("noisy"), py::arg("pad") = kDefaultImagePad, "Denoise a 2-D array of intensities in [0,1].")
      .def_property_readonly("depth", [](const DenoiseModel& self) { return self.config.depth; })
      .def_property_readonly("feed_channels", [](const DenoiseModel& self) { return self.config.feed_channels; })
      .def_property_readonly("skip_connections",
                             [](const DenoiseModel& self) { return self.config.skip_connections; })
      .def_property_readonly("noise", [](const DenoiseModel& self) { return self.noise.label(); })
      .def_property_readonly("parameter_count",
                             [](const DenoiseModel& self) { return parameter_count(self.weights); })
      .def_property_readonly("receptive_radius",
                             [](const DenoiseModel& self) { return self.config.receptive_radius(); });

  m.def(
      "parameter_count",
      [](std::size_t depth, std::size_t kernels, bool skip) {
        return parameter_count(NetworkConfig::from_kernels(depth, kernels, skip));
      },
      py::arg("depth") = 20, py::arg("kernels") = 64, py::arg("skip") = true);

  m.def(
      "corrupt",
      [](const Array& clean, std::optional<double> sigma, std::optional<double> peak, std::uint64_t seed) {
        SeededRng rng(seed);
        return to_array(corrupt(to_image(clean), make_spec(sigma, peak), rng));
      },
      py::arg("clean"), py::kw_only(), py::arg("sigma") = py::none(), py::arg("peak") = py::none(),
      py::arg("seed") = 0, "Add Gaussian (sigma on the 0-255 scale) or Poisson (peak) noise; not clamped.");

  m.def(
      "psnr", [](const Array& reference, const Array& test) { return psnr(to_image(reference), to_image(test)); },
      py::arg("reference"), py::arg("test"), "PSNR in dB with MAX = 1; the test image is clamped first.");

  m.def(
      "load_image", [](const std::filesystem::path& p) { return to_array(load_image(p)); }, py::arg("path"));
  m.def(
      "save_image", [](const Array& a, const std::filesystem::path& p) { save_image(to_image(a), p); },
      py::arg("image"), py::arg("path"));

  m.def(
      "synth_scenes",
      [](std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed) {
        py::list out;
        for (const auto& img : synth_scene_corpus(count, height, width, seed)) out.append(to_array(img));
        return out;
      },
      py::arg("count"), py::arg("height"), py::arg("width"), py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::run(args);
      },
      py::arg("args"), "Run the dnet command line with the given arguments; returns the exit code.");
}
