#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "dtvnet/tensor_types.hpp"

namespace dtvnet {

struct DVGConfig {
  int64_t n_adain_layers = 6;
  int64_t t_frames = 32;
  HW image_hw{128, 128};
  int64_t base_channels = 64;

  void validate() const;
  int64_t feature_channels() const { return 4 * base_channels; }
  HW feature_hw() const { return {image_hw.height / 4, image_hw.width / 4}; }
  HW flow_hw() const { return {image_hw.height / 2, image_hw.width / 2}; }
  bool operator==(const DVGConfig&) const = default;
};

// [C, h, w] content feature of the start frame.
struct SharedFeature {
  torch::Tensor data;
};

/// Per-channel modulation for one AdaIN layer (scale, shift: [C] or [N, C]).
struct AdaptiveStyle {
  torch::Tensor scale;
  torch::Tensor shift;
  int64_t layer_index = 0;
};

/// out = scale * (x - mu) / sqrt(var + 1e-5) + shift, with mu and var taken per
/// sample and channel over every remaining dim. x is [N, C, ...]; scale and shift [N, C].
torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& scale, const torch::Tensor& shift);
// Unbatched form: x is [C, ...].
torch::Tensor adain(const torch::Tensor& x, const AdaptiveStyle& style);

class SharedEncoderImpl : public torch::nn::Module {
 public:
  explicit SharedEncoderImpl(int64_t base_channels);
  torch::Tensor forward(const torch::Tensor& images);  // [N,3,H,W] -> [N,4b,H/4,W/4]

 private:
  torch::nn::Conv2d stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
};
TORCH_MODULE(SharedEncoder);

/// Linear adapters from the motion code to per-layer AdaIN parameters.
/// scale = 1 + A_i(adapt_i(f)), shift = B_i(adapt_i(f)).
class StyleMappingImpl : public torch::nn::Module {
 public:
  StyleMappingImpl(int64_t layers, int64_t channels);
  std::vector<AdaptiveStyle> forward(const torch::Tensor& f);  // f [N, 512]

  torch::nn::ModuleList adapt, scale, shift;
};
TORCH_MODULE(StyleMapping);

struct MotionOutput {
  torch::Tensor flows_lr;     // [N, 2, T, H/2, W/2]
  torch::Tensor motion_feat;  // [N, C, T, H/2, W/2]
};

/// Replicates the shared feature along time (plus a learned per-step
/// embedding), then n blocks of 3D conv, AdaIN, ReLU with a 2x spatial
/// upsample after block 3, and a 1x1x1 head to two flow channels.
class MotionStreamImpl : public torch::nn::Module {
 public:
  MotionStreamImpl(int64_t channels, int64_t layers, int64_t t_frames);
  MotionOutput forward(const torch::Tensor& shared, const std::vector<AdaptiveStyle>& styles);

  torch::Tensor time_embedding;

 private:
  int64_t t_frames_;
  torch::nn::ModuleList convs_;
  torch::nn::Conv3d flow_head_{nullptr};
};
TORCH_MODULE(MotionStream);

/// Two residual blocks x + IN(conv(ReLU(IN(conv(x))))).
class ContentStreamImpl : public torch::nn::Module {
 public:
  explicit ContentStreamImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& shared);

  torch::nn::ModuleList convs;
};
TORCH_MODULE(ContentStream);

/// Fuses the time-tiled content feature with the (pooled) motion feature,
/// upsamples twice with transposed 3D convs, injecting the predicted
/// low-resolution flows at half resolution, and maps to RGB through tanh.
class VideoDecoderImpl : public torch::nn::Module {
 public:
  VideoDecoderImpl(int64_t feature_channels, int64_t base_channels);
  torch::Tensor forward(const torch::Tensor& motion_feat, const torch::Tensor& flows_lr, const torch::Tensor& content);

 private:
  torch::nn::ConvTranspose3d up1_{nullptr}, up2_{nullptr};
  torch::nn::Conv3d to_rgb_{nullptr};
};
TORCH_MODULE(VideoDecoder);

struct GeneratorOutput {
  torch::Tensor frames;    // [N, 3, T, H, W]
  torch::Tensor flows_lr;  // [N, 2, T, H/2, W/2]
};

class DynamicVideoGeneratorImpl : public torch::nn::Module {
 public:
  explicit DynamicVideoGeneratorImpl(const DVGConfig& cfg);

  GeneratorOutput forward(const torch::Tensor& start_frames, const torch::Tensor& motion);
  void reset_parameters(at::Generator& gen);
  // Sets every style-mapping scale/shift weight to zero (f no longer affects the output).
  void zero_style_maps();
  const DVGConfig& config() const { return cfg_; }

  SharedEncoder encoder{nullptr};
  StyleMapping style{nullptr};
  MotionStream motion{nullptr};
  ContentStream content{nullptr};
  VideoDecoder decoder{nullptr};

 private:
  DVGConfig cfg_;
};
TORCH_MODULE(DynamicVideoGenerator);

// Unbatched entry points on a single clip.
SharedFeature encode_image(const torch::Tensor& i0, DynamicVideoGenerator& gen);
std::vector<AdaptiveStyle> style_mapping(const MotionVector& f, DynamicVideoGenerator& gen, int64_t n);
std::pair<FlowSequence, torch::Tensor> motion_stream(const SharedFeature& shared,
                                                     const std::vector<AdaptiveStyle>& styles,
                                                     DynamicVideoGenerator& gen);
torch::Tensor content_stream(const SharedFeature& shared, DynamicVideoGenerator& gen);
FrameSequence decode(const torch::Tensor& motion_feat, const FlowSequence& flows_lr, const torch::Tensor& content_feat,
                     DynamicVideoGenerator& gen);
std::pair<FrameSequence, FlowSequence> generate_video(const torch::Tensor& i0, const MotionVector& f,
                                                      DynamicVideoGenerator& gen);

}  // namespace dtvnet
