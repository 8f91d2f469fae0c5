#include "dtvnet/adversarial.hpp"

#include <cmath>

#include "dtvnet/errors.hpp"

namespace dtvnet {

void CriticConfig::validate() const {
  if (num_blocks < 1) throw InvalidArgument("critic.num_blocks must be >= 1");
  if (base_channels < 1) throw InvalidArgument("critic.base_channels must be >= 1");
  if (!(gp_lambda > 0.0)) throw InvalidArgument("critic.gp_lambda must be > 0");
}

std::vector<int64_t> critic_channels(const CriticConfig& cfg) {
  // 1x, 2x, 4x, 4x, 4x, 8x the base width for the six reference blocks.
  static constexpr int64_t kMult[] = {1, 2, 4, 4, 4, 8};
  std::vector<int64_t> ch;
  for (int64_t b = 0; b < cfg.num_blocks; ++b) {
    const int64_t m = b < 6 ? kMult[b] : 8;
    ch.push_back(cfg.base_channels * (b + 1 == cfg.num_blocks ? 8 : m));
  }
  return ch;
}

VideoCriticImpl::VideoCriticImpl(const CriticConfig& cfg, int64_t t_frames, HW hw)
    : cfg_(cfg), t_frames_(t_frames), hw_(hw) {
  cfg_.validate();
  plan_ = plan_downsampling({t_frames, hw.height, hw.width}, cfg_.num_blocks, /*temporal_stride_blocks=*/4);
  const auto channels = critic_channels(cfg_);
  int64_t in = 3;
  for (size_t b = 0; b < plan_.size(); ++b) {
    blocks_->push_back(torch::nn::Conv3d(conv3d_options(in, channels[b], plan_[b])));
    in = channels[b];
  }
  register_module("blocks", blocks_);
  head = register_module("head", torch::nn::Linear(in, 1));
}

void VideoCriticImpl::reset_parameters(at::Generator& gen) {
  init_conv_weights(*this, gen);
  torch::NoGradGuard no_grad;
  head->weight.normal_(0.0, 0.02, gen);
  head->bias.zero_();
}

torch::Tensor VideoCriticImpl::forward(const torch::Tensor& videos) {
  expect_shape(videos, {-1, 3, t_frames_, hw_.height, hw_.width}, "critic input");
  auto x = videos;
  for (auto& block : *blocks_) {
    x = torch::leaky_relu(instance_norm(block->as<torch::nn::Conv3d>()->forward(x)), 0.2);
  }
  return head->forward(x.mean({2, 3, 4})).squeeze(1);
}

double critic_score(const FrameSequence& video, VideoCritic& critic) {
  torch::NoGradGuard no_grad;
  return critic->forward(video.tensor().to(parameter_dtype(*critic)).unsqueeze(0)).item<double>();
}

namespace {

torch::Tensor l1_per_frame_sum(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  if (a.dim() == 4) return l1_per_frame_sum(a.unsqueeze(0), b.unsqueeze(0), what);
  if (a.dim() != 5) throw ShapeError(std::string(what) + ": expected [N,C,T,H,W], got " + shape_string(a));
  return (a - b).abs().mean({1, 3, 4}).sum(1).mean();
}

}  // namespace

torch::Tensor content_loss(const torch::Tensor& gen, const torch::Tensor& real) {
  return l1_per_frame_sum(gen, real, "content_loss");
}

torch::Tensor motion_loss(const torch::Tensor& gen_flows, const torch::Tensor& real_flows_lr) {
  return l1_per_frame_sum(gen_flows, real_flows_lr, "motion_loss");
}

double content_loss(const FrameSequence& gen, const FrameSequence& real) {
  torch::NoGradGuard no_grad;
  return content_loss(gen.tensor(), real.tensor()).item<double>();
}

double motion_loss(const FlowSequence& gen_flows, const FlowSequence& real_flows_lr) {
  torch::NoGradGuard no_grad;
  return motion_loss(gen_flows.tensor(), real_flows_lr.tensor()).item<double>();
}

torch::Tensor gradient_penalty(const torch::Tensor& real, const torch::Tensor& gen, const CriticFn& critic,
                               at::Generator& rng, const torch::Tensor& epsilon) {
  if (real.sizes() != gen.sizes() || real.dim() != 5) {
    throw ShapeError("gradient_penalty: expected matching [N,3,T,H,W], got " + shape_string(real) + " and " +
                     shape_string(gen));
  }
  const int64_t n = real.size(0);
  torch::Tensor eps = epsilon.defined() ? epsilon : torch::rand({n}, rng, real.options());
  eps = eps.to(real.dtype()).view({n, 1, 1, 1, 1});
  auto mixed = (eps * real.detach() + (1.0 - eps) * gen.detach()).requires_grad_(true);
  torch::AutoGradMode enable(true);
  auto scores = critic(mixed);
  if (!scores.requires_grad()) throw Error("gradient_penalty: critic output is not differentiable w.r.t. its input");
  auto grads = torch::autograd::grad({scores.sum()}, {mixed}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                     /*create_graph=*/true, /*allow_unused=*/true);
  if (!grads[0].defined()) throw Error("gradient_penalty: critic output does not depend on its input");
  auto norms = grads[0].reshape({n, -1}).pow(2).sum(1).sqrt();
  return (norms - 1.0).pow(2).mean();
}

CriticLossParts critic_loss(const torch::Tensor& real, const torch::Tensor& gen, const CriticFn& critic,
                            double gp_lambda, at::Generator& rng) {
  auto gp = gradient_penalty(real, gen, critic, rng);
  auto loss = critic(gen.detach()).mean() - critic(real.detach()).mean() + gp_lambda * gp;
  return {loss, gp};
}

torch::Tensor generator_adv_loss(const torch::Tensor& gen, const CriticFn& critic) { return -critic(gen).mean(); }

LossReport total_loss(double content, double motion, double adversarial_g, const LossWeights& weights, double critic,
                      double gradient_penalty) {
  for (double v : {content, motion, adversarial_g, critic, gradient_penalty}) {
    if (!std::isfinite(v)) throw TrainingDivergence("non-finite loss component");
  }
  LossReport r;
  r.content = content;
  r.motion = motion;
  r.adversarial_g = adversarial_g;
  r.critic = critic;
  r.gradient_penalty = gradient_penalty;
  r.total = weights.content * content + weights.motion * motion + weights.adversarial * adversarial_g;
  if (!std::isfinite(r.total)) throw TrainingDivergence("non-finite total loss");
  return r;
}

nlohmann::json loss_report_json(int64_t step, const LossReport& r) {
  return {{"step", step},     {"content", r.content},       {"motion", r.motion},
          {"adv_g", r.adversarial_g}, {"critic", r.critic}, {"gp", r.gradient_penalty},
          {"total", r.total}};
}

}  // namespace dtvnet
