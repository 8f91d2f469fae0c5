#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dtvnet/config.hpp"
#include "dtvnet/data.hpp"
#include "dtvnet/errors.hpp"
#include "dtvnet/flow.hpp"
#include "dtvnet/harness.hpp"
#include "dtvnet/metrics.hpp"
#include "dtvnet/training.hpp"

namespace py = pybind11;
using namespace dtvnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const FloatArray& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

FloatArray to_array(const torch::Tensor& t_in) {
  const auto t = t_in.detach().to(torch::kFloat32).contiguous();
  FloatArray out(std::vector<py::ssize_t>(t.sizes().begin(), t.sizes().end()));
  std::memcpy(out.mutable_data(), t.data_ptr<float>(), sizeof(float) * static_cast<size_t>(t.numel()));
  return out;
}

}  // namespace

PYBIND11_MODULE(_dtvnet, m) {
  m.attr("__version__") = kToolVersion;

  m.def("psnr", [](const FloatArray& gen, const FloatArray& real) {
    return psnr(FrameSequence(to_tensor(gen)), FrameSequence(to_tensor(real)));
  }, py::arg("gen"), py::arg("real"), "Mean per-frame PSNR (dB) of [3,T,H,W] videos in [-1,1].");

  m.def("ssim", [](const FloatArray& gen, const FloatArray& real) {
    return ssim(FrameSequence(to_tensor(gen)), FrameSequence(to_tensor(real)));
  }, py::arg("gen"), py::arg("real"));

  // Uses the deterministic translation estimator.
  m.def("flow_mse", [](const FloatArray& gen, const FloatArray& real) {
    return flow_mse(FrameSequence(to_tensor(gen)), FrameSequence(to_tensor(real)), TranslationOracle{});
  }, py::arg("gen"), py::arg("real"));

  m.def("lr_at", [](int64_t epoch, double lr0, int64_t decay_every, double factor) {
    TrainConfig cfg;
    cfg.lr0 = lr0;
    cfg.lr_decay_every = decay_every;
    cfg.lr_decay_factor = factor;
    return lr_at(epoch, cfg);
  }, py::arg("epoch"), py::arg("lr0") = 3e-4, py::arg("decay_every") = 150, py::arg("factor") = 10.0);

  // Returned as a JSON string; json.loads it on the Python side.
  m.def("profile_defaults", [](const std::string& profile) {
    return nlohmann::json(profile_defaults(profile)).dump();
  }, py::arg("profile"));

  m.def("synth_clip", [](std::uint64_t seed, int64_t t, int64_t h, int64_t w, double dx, double dy) {
    const auto clip = synth_clip(seed, t, {h, w}, {dx, dy});
    return py::make_tuple(to_array(clip.frames.tensor()), to_array(clip.flows.tensor()));
  }, py::arg("seed"), py::arg("t"), py::arg("height"), py::arg("width"), py::arg("dx") = 1.0, py::arg("dy") = 0.0);

  // Runs a CLI command in-process; returns (exit_code, stdout, stderr).
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<const char*> argv{"dtvnet"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));

  py::register_exception<dtvnet::Error>(m, "DtvnetError", PyExc_RuntimeError);
}
