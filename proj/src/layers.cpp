#include "dtvnet/layers.hpp"

#include "dtvnet/errors.hpp"

namespace dtvnet {

std::vector<DownsampleStep> plan_downsampling(std::array<int64_t, 3> dims, int64_t blocks,
                                              int64_t temporal_stride_blocks) {
  std::vector<DownsampleStep> plan;
  for (int64_t b = 0; b < blocks; ++b) {
    DownsampleStep step{};
    for (int d = 0; d < 3; ++d) {
      const bool may_stride = d > 0 || b < temporal_stride_blocks;
      const bool halve = may_stride && dims[d] >= 4;
      step.kernel[d] = halve && d > 0 ? 4 : 3;
      step.stride[d] = halve ? 2 : 1;
      step.padding[d] = 1;
      dims[d] = (dims[d] + 2 * step.padding[d] - step.kernel[d]) / step.stride[d] + 1;
      if (dims[d] < 1) throw InvalidArgument("plan_downsampling: input volume too small");
      step.out_dims[d] = dims[d];
    }
    plan.push_back(step);
  }
  return plan;
}

torch::nn::Conv3dOptions conv3d_options(int64_t in, int64_t out, const DownsampleStep& step) {
  return torch::nn::Conv3dOptions(in, out, {step.kernel[0], step.kernel[1], step.kernel[2]})
      .stride({step.stride[0], step.stride[1], step.stride[2]})
      .padding({step.padding[0], step.padding[1], step.padding[2]});
}

torch::Tensor instance_norm(const torch::Tensor& x) {
  return torch::nn::functional::instance_norm(x, torch::nn::functional::InstanceNormFuncOptions().eps(1e-5));
}

void init_conv_weights(torch::nn::Module& module, at::Generator& gen) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/true)) {
    const bool is_conv = child->as<torch::nn::Conv2d>() || child->as<torch::nn::Conv3d>() ||
                         child->as<torch::nn::ConvTranspose3d>();
    if (!is_conv) continue;
    for (auto& p : child->named_parameters(/*recurse=*/false)) {
      if (p.key() == "weight") p.value().normal_(0.0, 0.02, gen);
      else p.value().zero_();
    }
  }
}

torch::ScalarType parameter_dtype(const torch::nn::Module& module) {
  const auto params = module.parameters();
  return params.empty() ? torch::kFloat32 : params.front().scalar_type();
}

}  // namespace dtvnet
