#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "dtvnet/adversarial.hpp"
#include "dtvnet/dvg.hpp"
#include "dtvnet/ofe.hpp"

namespace dtvnet {

/// Architecture of every learnable component. Clip length and resolution live
/// here and are copied into the sub-configs by `resolved()`.
struct ModelConfig {
  int64_t t_frames = 32;
  HW image_hw{128, 128};
  OFEConfig ofe;
  DVGConfig dvg;
  CriticConfig critic;

  ModelConfig resolved() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Flow encoder, generator, and critic built from one config.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  OpticalFlowEncoder ofe{nullptr};
  DynamicVideoGenerator generator{nullptr};
  VideoCritic critic{nullptr};

  // Encoder + generator parameters (everything the generator-side optimizer updates).
  std::vector<std::pair<std::string, torch::Tensor>> generator_parameters() const;
  std::vector<std::pair<std::string, torch::Tensor>> critic_parameters() const;
  // Both groups, prefixed "ofe.", "generator.", "critic.".
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;

  void to(torch::ScalarType dtype);
  torch::ScalarType dtype() const { return parameter_dtype(*generator); }

  // Video from start frames [N,3,H,W] and real flows [N,2,T,H,W] via encoded motion codes.
  GeneratorOutput reconstruct(const torch::Tensor& start_frames, const torch::Tensor& flows);

 private:
  ModelConfig cfg_;
};

}  // namespace dtvnet
