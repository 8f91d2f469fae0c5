#include "dtvnet/dvg.hpp"

#include "dtvnet/errors.hpp"
#include "dtvnet/layers.hpp"

namespace dtvnet {
namespace F = torch::nn::functional;

void DVGConfig::validate() const {
  if (n_adain_layers < 1) throw InvalidArgument("dvg.n_adain_layers must be >= 1");
  if (t_frames < 1) throw InvalidArgument("dvg.t_frames must be >= 1");
  if (base_channels < 1) throw InvalidArgument("dvg.base_channels must be >= 1");
  if (image_hw.height < 8 || image_hw.width < 8 || image_hw.height % 4 != 0 || image_hw.width % 4 != 0) {
    throw InvalidArgument("dvg.image_hw must be multiples of 4 and at least 8");
  }
}

namespace {

std::vector<int64_t> channel_view(const torch::Tensor& x) {
  std::vector<int64_t> shape{x.size(0), x.size(1)};
  for (int64_t d = 2; d < x.dim(); ++d) shape.push_back(1);
  return shape;
}

}  // namespace

torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& scale, const torch::Tensor& shift) {
  if (x.dim() < 3) throw ShapeError("adain: expected [N, C, ...], got " + shape_string(x));
  expect_shape(scale, {x.size(0), x.size(1)}, "adain scale");
  expect_shape(shift, {x.size(0), x.size(1)}, "adain shift");
  std::vector<int64_t> reduce;
  for (int64_t d = 2; d < x.dim(); ++d) reduce.push_back(d);
  auto mean = x.mean(reduce, /*keepdim=*/true);
  auto centered = x - mean;
  auto var = centered.pow(2).mean(reduce, /*keepdim=*/true);
  const auto view = channel_view(x);
  return scale.view(view) * centered / (var + 1e-5).sqrt() + shift.view(view);
}

torch::Tensor adain(const torch::Tensor& x, const AdaptiveStyle& style) {
  return adain(x.unsqueeze(0), style.scale.reshape({1, -1}), style.shift.reshape({1, -1})).squeeze(0);
}

SharedEncoderImpl::SharedEncoderImpl(int64_t b) {
  stem_ = register_module("stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, b, 7).padding(3)));
  down1_ = register_module("down1", torch::nn::Conv2d(torch::nn::Conv2dOptions(b, 2 * b, 4).stride(2).padding(1)));
  down2_ = register_module("down2", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * b, 4 * b, 4).stride(2).padding(1)));
}

torch::Tensor SharedEncoderImpl::forward(const torch::Tensor& images) {
  auto x = torch::relu(instance_norm(stem_->forward(images)));
  x = torch::relu(instance_norm(down1_->forward(x)));
  return torch::relu(instance_norm(down2_->forward(x)));
}

StyleMappingImpl::StyleMappingImpl(int64_t layers, int64_t channels) {
  for (int64_t i = 0; i < layers; ++i) {
    adapt->push_back(torch::nn::Linear(kMotionDim, kMotionDim));
    scale->push_back(torch::nn::Linear(kMotionDim, channels));
    shift->push_back(torch::nn::Linear(kMotionDim, channels));
  }
  register_module("adapt", adapt);
  register_module("scale", scale);
  register_module("shift", shift);
}

std::vector<AdaptiveStyle> StyleMappingImpl::forward(const torch::Tensor& f) {
  expect_shape(f, {-1, kMotionDim}, "style mapping input");
  std::vector<AdaptiveStyle> styles;
  for (size_t i = 0; i < adapt->size(); ++i) {
    auto adapted = adapt[i]->as<torch::nn::Linear>()->forward(f);
    styles.push_back({1.0 + scale[i]->as<torch::nn::Linear>()->forward(adapted),
                      shift[i]->as<torch::nn::Linear>()->forward(adapted), static_cast<int64_t>(i) + 1});
  }
  return styles;
}

MotionStreamImpl::MotionStreamImpl(int64_t channels, int64_t layers, int64_t t_frames) : t_frames_(t_frames) {
  time_embedding = register_parameter("time_embedding", torch::zeros({1, channels, t_frames, 1, 1}));
  for (int64_t i = 0; i < layers; ++i) {
    convs_->push_back(torch::nn::Conv3d(torch::nn::Conv3dOptions(channels, channels, 3).padding(1)));
  }
  register_module("convs", convs_);
  flow_head_ = register_module("flow_head", torch::nn::Conv3d(torch::nn::Conv3dOptions(channels, 2, 1)));
}

MotionOutput MotionStreamImpl::forward(const torch::Tensor& shared, const std::vector<AdaptiveStyle>& styles) {
  if (styles.size() != convs_->size()) {
    throw ShapeError("motion stream: got " + std::to_string(styles.size()) + " styles for " +
                     std::to_string(convs_->size()) + " AdaIN layers");
  }
  expect_shape(shared, {-1, time_embedding.size(1), -1, -1}, "motion stream input");
  auto x = shared.unsqueeze(2).expand({-1, -1, t_frames_, -1, -1}) + time_embedding;
  // Upsample once, midway through the stack.
  const size_t upsample_after = (convs_->size() + 1) / 2;
  for (size_t i = 0; i < convs_->size(); ++i) {
    x = convs_[i]->as<torch::nn::Conv3d>()->forward(x);
    x = torch::relu(adain(x, styles[i].scale, styles[i].shift));
    if (i + 1 == upsample_after) {
      x = F::interpolate(x, F::InterpolateFuncOptions()
                                .scale_factor(std::vector<double>{1.0, 2.0, 2.0})
                                .mode(torch::kNearest));
    }
  }
  return {flow_head_->forward(x), x};
}

ContentStreamImpl::ContentStreamImpl(int64_t channels) {
  for (int i = 0; i < 4; ++i) {
    convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  }
  register_module("convs", convs);
}

torch::Tensor ContentStreamImpl::forward(const torch::Tensor& shared) {
  auto x = shared;
  for (size_t block = 0; block < 2; ++block) {
    auto r = torch::relu(instance_norm(convs[2 * block]->as<torch::nn::Conv2d>()->forward(x)));
    r = instance_norm(convs[2 * block + 1]->as<torch::nn::Conv2d>()->forward(r));
    x = x + r;
  }
  return x;
}

VideoDecoderImpl::VideoDecoderImpl(int64_t feature_channels, int64_t b) {
  auto up = [](int64_t in, int64_t out) {
    return torch::nn::ConvTranspose3dOptions(in, out, {3, 4, 4}).stride({1, 2, 2}).padding({1, 1, 1});
  };
  up1_ = register_module("up1", torch::nn::ConvTranspose3d(up(2 * feature_channels, 2 * b)));
  up2_ = register_module("up2", torch::nn::ConvTranspose3d(up(2 * b + 2, b)));
  to_rgb_ = register_module("to_rgb", torch::nn::Conv3d(torch::nn::Conv3dOptions(b, 3, 3).padding(1)));
}

torch::Tensor VideoDecoderImpl::forward(const torch::Tensor& motion_feat, const torch::Tensor& flows_lr,
                                        const torch::Tensor& content) {
  if (motion_feat.dim() != 5 || content.dim() != 4 || flows_lr.dim() != 5) {
    throw ShapeError("decoder: expected motion [N,C,T,h,w], flows [N,2,T,h,w], content [N,C,h',w']");
  }
  const int64_t t = motion_feat.size(2);
  auto motion_pooled = torch::avg_pool3d(motion_feat, {1, 2, 2}, {1, 2, 2});
  if (motion_pooled.sizes().slice(3) != content.sizes().slice(2) || motion_pooled.size(0) != content.size(0)) {
    throw ShapeError("decoder: motion feature " + shape_string(motion_feat) + " incompatible with content feature " +
                     shape_string(content));
  }
  if (flows_lr.size(2) != t || flows_lr.sizes().slice(3) != motion_feat.sizes().slice(3)) {
    throw ShapeError("decoder: flows " + shape_string(flows_lr) + " incompatible with motion feature " +
                     shape_string(motion_feat));
  }
  auto tiled = content.unsqueeze(2).expand({-1, -1, t, -1, -1});
  auto x = torch::relu(instance_norm(up1_->forward(torch::cat({motion_pooled, tiled}, 1))));
  x = torch::relu(instance_norm(up2_->forward(torch::cat({x, flows_lr}, 1))));
  return torch::tanh(to_rgb_->forward(x));
}

DynamicVideoGeneratorImpl::DynamicVideoGeneratorImpl(const DVGConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t c = cfg_.feature_channels();
  encoder = register_module("encoder", SharedEncoder(cfg_.base_channels));
  style = register_module("style", StyleMapping(cfg_.n_adain_layers, c));
  motion = register_module("motion", MotionStream(c, cfg_.n_adain_layers, cfg_.t_frames));
  content = register_module("content", ContentStream(c));
  decoder = register_module("decoder", VideoDecoder(c, cfg_.base_channels));
}

void DynamicVideoGeneratorImpl::reset_parameters(at::Generator& gen) {
  init_conv_weights(*this, gen);
  torch::NoGradGuard no_grad;
  for (auto& m : *style->adapt) {
    auto* lin = m->as<torch::nn::Linear>();
    lin->weight.normal_(0.0, 0.02, gen);
    lin->bias.zero_();
  }
  for (auto* list : {&style->scale, &style->shift}) {
    for (auto& m : **list) {
      auto* lin = m->as<torch::nn::Linear>();
      lin->weight.zero_();
      lin->bias.zero_();
    }
  }
  motion->time_embedding.normal_(0.0, 0.02, gen);
}

void DynamicVideoGeneratorImpl::zero_style_maps() {
  torch::NoGradGuard no_grad;
  for (auto* list : {&style->scale, &style->shift}) {
    for (auto& m : **list) m->as<torch::nn::Linear>()->weight.zero_();
  }
}

GeneratorOutput DynamicVideoGeneratorImpl::forward(const torch::Tensor& start_frames, const torch::Tensor& f) {
  expect_shape(start_frames, {-1, 3, cfg_.image_hw.height, cfg_.image_hw.width}, "generator start frame");
  expect_shape(f, {start_frames.size(0), kMotionDim}, "generator motion vector");
  auto shared = encoder->forward(start_frames);
  auto styles = style->forward(f);
  auto m = motion->forward(shared, styles);
  auto c = content->forward(shared);
  return {decoder->forward(m.motion_feat, m.flows_lr, c), m.flows_lr};
}

namespace {

torch::Tensor as_model_input(const torch::Tensor& t, DynamicVideoGenerator& gen) {
  return t.to(parameter_dtype(*gen)).unsqueeze(0);
}

}  // namespace

SharedFeature encode_image(const torch::Tensor& i0, DynamicVideoGenerator& gen) {
  const auto& cfg = gen->config();
  expect_shape(i0, {3, cfg.image_hw.height, cfg.image_hw.width}, "encode_image");
  return {gen->encoder->forward(as_model_input(i0, gen)).squeeze(0)};
}

std::vector<AdaptiveStyle> style_mapping(const MotionVector& f, DynamicVideoGenerator& gen, int64_t n) {
  if (n != gen->config().n_adain_layers) {
    throw ShapeError("style_mapping: requested " + std::to_string(n) + " styles, generator has " +
                     std::to_string(gen->config().n_adain_layers));
  }
  auto styles = gen->style->forward(as_model_input(f.tensor(), gen));
  for (auto& s : styles) {
    s.scale = s.scale.squeeze(0);
    s.shift = s.shift.squeeze(0);
  }
  return styles;
}

std::pair<FlowSequence, torch::Tensor> motion_stream(const SharedFeature& shared,
                                                     const std::vector<AdaptiveStyle>& styles,
                                                     DynamicVideoGenerator& gen) {
  std::vector<AdaptiveStyle> batched;
  for (const auto& s : styles) batched.push_back({s.scale.reshape({1, -1}), s.shift.reshape({1, -1}), s.layer_index});
  auto out = gen->motion->forward(as_model_input(shared.data, gen), batched);
  return {FlowSequence(out.flows_lr.squeeze(0)), out.motion_feat.squeeze(0)};
}

torch::Tensor content_stream(const SharedFeature& shared, DynamicVideoGenerator& gen) {
  expect_shape(shared.data, {gen->config().feature_channels(), -1, -1}, "content_stream");
  return gen->content->forward(as_model_input(shared.data, gen)).squeeze(0);
}

FrameSequence decode(const torch::Tensor& motion_feat, const FlowSequence& flows_lr, const torch::Tensor& content_feat,
                     DynamicVideoGenerator& gen) {
  auto out = gen->decoder->forward(as_model_input(motion_feat, gen), as_model_input(flows_lr.tensor(), gen),
                                   as_model_input(content_feat, gen));
  return FrameSequence(out.squeeze(0));
}

std::pair<FrameSequence, FlowSequence> generate_video(const torch::Tensor& i0, const MotionVector& f,
                                                      DynamicVideoGenerator& gen) {
  torch::NoGradGuard no_grad;
  auto out = gen->forward(as_model_input(i0, gen), as_model_input(f.tensor(), gen));
  return {FrameSequence(out.frames.squeeze(0)), FlowSequence(out.flows_lr.squeeze(0))};
}

}  // namespace dtvnet
