#include "dtvnet/ofe.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "dtvnet/errors.hpp"

namespace dtvnet {

void OFEConfig::validate() const {
  if (num_blocks < 1) throw InvalidArgument("ofe.num_blocks must be >= 1");
  if (base_channels < 1) throw InvalidArgument("ofe.base_channels must be >= 1");
  if (input_t < 1 || input_hw.height < 1 || input_hw.width < 1) throw InvalidArgument("ofe input dims must be >= 1");
}

std::vector<int64_t> ofe_channels(const OFEConfig& cfg) {
  std::vector<int64_t> ch;
  for (int64_t b = 0; b < cfg.num_blocks; ++b) {
    ch.push_back(b + 1 == cfg.num_blocks ? kMotionDim : std::min<int64_t>(cfg.base_channels << b, kMotionDim));
  }
  return ch;
}

OpticalFlowEncoderImpl::OpticalFlowEncoderImpl(const OFEConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  plan_ = plan_downsampling({cfg_.input_t, cfg_.input_hw.height, cfg_.input_hw.width}, cfg_.num_blocks,
                            cfg_.num_blocks);
  const auto channels = ofe_channels(cfg_);
  int64_t in = 2;
  for (size_t b = 0; b < plan_.size(); ++b) {
    blocks_->push_back(torch::nn::Conv3d(conv3d_options(in, channels[b], plan_[b])));
    in = channels[b];
  }
  register_module("blocks", blocks_);
  head_offset_ = register_parameter("head_offset", torch::zeros({kMotionDim}));
}

void OpticalFlowEncoderImpl::reset_parameters(at::Generator& gen) {
  init_conv_weights(*this, gen);
  torch::NoGradGuard no_grad;
  head_offset_.normal_(0.0, 0.02, gen);
}

torch::Tensor OpticalFlowEncoderImpl::forward_raw(const torch::Tensor& flows) {
  expect_shape(flows, {-1, 2, cfg_.input_t, cfg_.input_hw.height, cfg_.input_hw.width}, "optical flow encoder input");
  auto x = flows;
  for (auto& block : *blocks_) {
    x = block->as<torch::nn::Conv3d>()->forward(x);
    x = torch::leaky_relu(instance_norm(x), 0.2);
  }
  return x.mean({2, 3, 4}) + head_offset_;
}

torch::Tensor OpticalFlowEncoderImpl::forward(const torch::Tensor& flows) { return standardize_rows(forward_raw(flows)); }

torch::Tensor standardize_rows(const torch::Tensor& raw) {
  if (raw.dim() != 2) throw ShapeError("standardize_rows: expected [N, D], got " + shape_string(raw));
  auto mean = raw.mean(1, /*keepdim=*/true);
  auto centered = raw - mean;
  auto std = centered.pow(2).mean(1, /*keepdim=*/true).sqrt();
  if (std.min().item<double>() <= 1e-8) {
    throw DegenerateVectorError("motion vector has near-zero spread (std <= 1e-8)");
  }
  return centered / std;
}

MotionVector normalize_vector(const torch::Tensor& raw) {
  expect_shape(raw, {kMotionDim}, "normalize_vector");
  return MotionVector(standardize_rows(raw.detach().unsqueeze(0)).squeeze(0));
}

MotionVector encode_flows(const FlowSequence& flows, OpticalFlowEncoder& encoder) {
  torch::NoGradGuard no_grad;
  auto x = flows.tensor().to(parameter_dtype(*encoder)).unsqueeze(0);
  return MotionVector(encoder->forward(x).squeeze(0));
}

MotionVector sample_motion_vector(std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto raw = torch::randn({kMotionDim}, gen, torch::kFloat32);
  return normalize_vector(raw);
}

}  // namespace dtvnet
