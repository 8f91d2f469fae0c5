#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "dtvnet/layers.hpp"
#include "dtvnet/tensor_types.hpp"

namespace dtvnet {

struct OFEConfig {
  int64_t base_channels = 32;
  int64_t num_blocks = 5;
  HW input_hw{128, 128};
  int64_t input_t = 32;

  void validate() const;
  bool operator==(const OFEConfig&) const = default;
};

/// Optical flow encoder: 3D conv stack (conv, instance norm, LeakyReLU 0.2)
/// over [N, 2, T, H, W] flows, global average pool, then a learned per-dim
/// offset before per-vector standardization.
class OpticalFlowEncoderImpl : public torch::nn::Module {
 public:
  explicit OpticalFlowEncoderImpl(const OFEConfig& cfg);

  // [N, 512] pooled features plus offset, before standardization.
  torch::Tensor forward_raw(const torch::Tensor& flows);
  // [N, 512] standardized motion codes.
  torch::Tensor forward(const torch::Tensor& flows);

  void reset_parameters(at::Generator& gen);
  const OFEConfig& config() const { return cfg_; }
  const std::vector<DownsampleStep>& plan() const { return plan_; }

 private:
  OFEConfig cfg_;
  std::vector<DownsampleStep> plan_;
  torch::nn::ModuleList blocks_;
  torch::Tensor head_offset_;
};
TORCH_MODULE(OpticalFlowEncoder);

// Channel widths of the encoder blocks; the last one is always kMotionDim.
std::vector<int64_t> ofe_channels(const OFEConfig& cfg);

/// Row-wise (x - mean) / std with population std; differentiable. Throws
/// DegenerateVectorError when any row has std <= 1e-8.
torch::Tensor standardize_rows(const torch::Tensor& raw);

MotionVector normalize_vector(const torch::Tensor& raw);
MotionVector encode_flows(const FlowSequence& flows, OpticalFlowEncoder& encoder);
// 512 i.i.d. standard normal draws, standardized.
MotionVector sample_motion_vector(std::uint64_t seed);

}  // namespace dtvnet
