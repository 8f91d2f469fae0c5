#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace dtvnet {

// Per-dimension geometry of one downsampling 3D conv (time, height, width).
struct DownsampleStep {
  std::array<int64_t, 3> kernel;
  std::array<int64_t, 3> stride;
  std::array<int64_t, 3> padding;
  std::array<int64_t, 3> out_dims;
};

/// Plans `blocks` encoder convs over a (t, h, w) volume. A dimension is halved
/// (kernel 4 spatially / 3 temporally, padding 1) while it is at least 4 and
/// otherwise kept (kernel 3, stride 1, padding 1), so no block collapses a
/// dimension below 2. Temporal halving is allowed only for the first
/// `temporal_stride_blocks` blocks.
std::vector<DownsampleStep> plan_downsampling(std::array<int64_t, 3> dims, int64_t blocks,
                                              int64_t temporal_stride_blocks);

torch::nn::Conv3dOptions conv3d_options(int64_t in, int64_t out, const DownsampleStep& step);

// Instance norm without affine parameters, eps 1e-5, over all non-(N, C) dims.
torch::Tensor instance_norm(const torch::Tensor& x);

// N(0, 0.02) weights and zero biases for every conv / transposed conv under `module`.
void init_conv_weights(torch::nn::Module& module, at::Generator& gen);

// dtype of the first parameter (models are kept in a single precision).
torch::ScalarType parameter_dtype(const torch::nn::Module& module);

}  // namespace dtvnet
