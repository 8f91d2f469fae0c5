#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dtvnet/layers.hpp"
#include "dtvnet/tensor_types.hpp"

namespace dtvnet {

struct CriticConfig {
  int64_t num_blocks = 6;
  int64_t base_channels = 64;
  double gp_lambda = 10.0;

  void validate() const;
  bool operator==(const CriticConfig&) const = default;
};

/// Video critic: six (3D conv, instance norm, LeakyReLU 0.2) blocks with
/// spatial stride 2 throughout and temporal stride 2 on the first four,
/// then a global mean pool and a linear head to one score per video.
class VideoCriticImpl : public torch::nn::Module {
 public:
  VideoCriticImpl(const CriticConfig& cfg, int64_t t_frames, HW hw);

  torch::Tensor forward(const torch::Tensor& videos);  // [N,3,T,H,W] -> [N]
  void reset_parameters(at::Generator& gen);
  const CriticConfig& config() const { return cfg_; }
  const std::vector<DownsampleStep>& plan() const { return plan_; }

  torch::nn::Linear head{nullptr};

 private:
  CriticConfig cfg_;
  int64_t t_frames_;
  HW hw_;
  std::vector<DownsampleStep> plan_;
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(VideoCritic);

std::vector<int64_t> critic_channels(const CriticConfig& cfg);

// Any differentiable map [N,3,T,H,W] -> [N].
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// Scalar reported per step and the weights that combine them.
struct LossReport {
  double content = 0.0;
  double motion = 0.0;
  double adversarial_g = 0.0;
  double critic = 0.0;
  double gradient_penalty = 0.0;
  double total = 0.0;
};

struct LossWeights {
  double content = 100.0;
  double motion = 1.0;
  double adversarial = 1.0;
};

double critic_score(const FrameSequence& video, VideoCritic& critic);

// Sum over time of the per-frame mean absolute error, averaged over the batch.
// Accepts [C,T,H,W] or [N,C,T,H,W].
torch::Tensor content_loss(const torch::Tensor& gen, const torch::Tensor& real);
torch::Tensor motion_loss(const torch::Tensor& gen_flows, const torch::Tensor& real_flows_lr);
double content_loss(const FrameSequence& gen, const FrameSequence& real);
double motion_loss(const FlowSequence& gen_flows, const FlowSequence& real_flows_lr);

/// mean_n (||grad_x D(x_n)||_2 - 1)^2 at x = eps*real + (1-eps)*gen, eps ~ U(0,1)
/// per sample. Keeps the graph so the result can be differentiated w.r.t. the
/// critic parameters. `epsilon`, when defined, overrides the draw ([N]).
torch::Tensor gradient_penalty(const torch::Tensor& real, const torch::Tensor& gen, const CriticFn& critic,
                               at::Generator& rng, const torch::Tensor& epsilon = {});

struct CriticLossParts {
  torch::Tensor loss;  // mean D(gen) - mean D(real) + lambda * gp
  torch::Tensor gp;
};
CriticLossParts critic_loss(const torch::Tensor& real, const torch::Tensor& gen, const CriticFn& critic,
                            double gp_lambda, at::Generator& rng);

torch::Tensor generator_adv_loss(const torch::Tensor& gen, const CriticFn& critic);

/// Weighted recombination; throws TrainingDivergence on any non-finite part.
LossReport total_loss(double content, double motion, double adversarial_g, const LossWeights& weights,
                      double critic = 0.0, double gradient_penalty = 0.0);

// {"step","content","motion","adv_g","critic","gp","total"}
nlohmann::json loss_report_json(int64_t step, const LossReport& report);

}  // namespace dtvnet
