#include "dtvnet/model.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "dtvnet/errors.hpp"

namespace dtvnet {

ModelConfig ModelConfig::resolved() const {
  ModelConfig out = *this;
  out.ofe.input_t = t_frames;
  out.ofe.input_hw = image_hw;
  out.dvg.t_frames = t_frames;
  out.dvg.image_hw = image_hw;
  return out;
}

void ModelConfig::validate() const {
  if (t_frames < 1) throw InvalidArgument("model.t_frames must be >= 1");
  const auto r = resolved();
  r.ofe.validate();
  r.dvg.validate();
  r.critic.validate();
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg.resolved()) {
  cfg_.validate();
  ofe = OpticalFlowEncoder(cfg_.ofe);
  generator = DynamicVideoGenerator(cfg_.dvg);
  critic = VideoCritic(cfg_.critic, cfg_.t_frames, cfg_.image_hw);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  ofe->reset_parameters(gen);
  generator->reset_parameters(gen);
  critic->reset_parameters(gen);
}

namespace {

void append_named(std::vector<std::pair<std::string, torch::Tensor>>& out, const torch::nn::Module& m,
                  const std::string& prefix) {
  for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
}

}  // namespace

std::vector<std::pair<std::string, torch::Tensor>> Model::generator_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  append_named(out, *ofe, "ofe.");
  append_named(out, *generator, "generator.");
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> Model::critic_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  append_named(out, *critic, "critic.");
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> Model::named_parameters() const {
  auto out = generator_parameters();
  for (auto& p : critic_parameters()) out.push_back(std::move(p));
  return out;
}

void Model::to(torch::ScalarType dtype) {
  ofe->to(dtype);
  generator->to(dtype);
  critic->to(dtype);
}

GeneratorOutput Model::reconstruct(const torch::Tensor& start_frames, const torch::Tensor& flows) {
  return generator->forward(start_frames, ofe->forward(flows));
}

}  // namespace dtvnet
