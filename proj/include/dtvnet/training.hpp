#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dtvnet/adversarial.hpp"
#include "dtvnet/data.hpp"
#include "dtvnet/flow.hpp"
#include "dtvnet/model.hpp"

namespace dtvnet {

struct TrainConfig {
  int64_t epochs = 200;
  int64_t batch_size = 12;
  double lr0 = 3e-4;
  int64_t lr_decay_every = 150;
  double lr_decay_factor = 10.0;
  std::array<double, 2> betas{0.99, 0.999};
  double adam_eps = 1e-8;
  LossWeights weights;
  int64_t critic_steps = 1;
  // Stop after this many optimization steps; 0 means run every epoch.
  int64_t max_steps = 0;
  int64_t checkpoint_every = 1;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr0 / factor^floor(epoch / decay_every), rounded to 15 significant digits
/// so that decade steps land exactly on their decimal values.
double lr_at(int64_t epoch, const TrainConfig& cfg);

/// Adaptive-moment optimizer over a fixed, ordered parameter list.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, double lr, std::array<double, 2> betas, double eps);

  void zero_grad();
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  int64_t steps() const { return steps_; }
  void set_steps(int64_t s) { steps_ = s; }
  std::vector<torch::Tensor>& first_moments() { return m_; }
  std::vector<torch::Tensor>& second_moments() { return v_; }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_, v_;
  double lr_;
  std::array<double, 2> betas_;
  double eps_;
  int64_t steps_ = 0;
};

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  nlohmann::json config;  // {"model": ..., "train": ...}
  int64_t epoch = 0;      // next epoch to run
  int64_t step = 0;       // optimization steps taken
  int64_t generator_opt_steps = 0;
  int64_t critic_opt_steps = 0;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  std::vector<std::uint8_t> rng_state;

  std::string config_hash() const;
  ModelConfig model_config() const;
  const torch::Tensor& tensor(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "DTVC", u32 version, u64 header length, JSON header, little-endian binary32 payload.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws ConfigMismatch naming the first differing model field.
void require_compatible(const Checkpoint& ckpt, const ModelConfig& cfg);

// Copies the checkpoint's parameters into `model` (config must match).
void load_parameters(const Checkpoint& ckpt, Model& model);

struct TrainBatch {
  torch::Tensor frames;  // [N, 3, T+1, H, W]
  torch::Tensor flows;   // [N, 2, T, H, W]
};

TrainBatch make_batch(const std::vector<FrameSequence>& clips, const std::vector<FlowSequence>& flows);

class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg);

  /// One critic update (critic loss with gradient penalty) followed by one
  /// generator update on the weighted content + motion + adversarial loss.
  LossReport train_step(const TrainBatch& batch);

  void set_epoch(int64_t epoch);
  int64_t epoch() const { return epoch_; }
  int64_t step() const { return step_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  Model& model() { return model_; }
  at::Generator& rng() { return rng_; }
  const TrainConfig& train_config() const { return train_cfg_; }

 private:
  ModelConfig model_cfg_;
  TrainConfig train_cfg_;
  Model model_;
  at::Generator rng_;
  Adam gen_opt_;
  Adam critic_opt_;
  int64_t epoch_ = 0;
  int64_t step_ = 0;
};

nlohmann::json training_config_json(const ModelConfig& model, const TrainConfig& train);

// True when the configuration is well beyond workstation scale.
bool is_paper_scale(const ModelConfig& model, const TrainConfig& train);

struct FitOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  // Used for clips without a cached FlowFile.
  const FlowEstimator* provider = nullptr;
  std::ostream* progress = nullptr;
  // Stop (after checkpointing) once this many epochs ran in this call; -1 = no limit.
  int64_t epoch_budget = -1;
};

struct TrainingClip {
  std::string clip_id;
  FrameSequence frames;
  FlowSequence flows;
};

// Loads frames and flows (cache first, provider second) for one clip.
TrainingClip load_training_clip(const ClipManifest& clip, const ModelConfig& cfg, const FlowEstimator* provider);

/// Trains on the train split, writing train_log.jsonl, checkpoint_epoch_NNNN.ckpt
/// and last.ckpt into out_dir. Returns the final checkpoint.
Checkpoint fit(const std::vector<ClipManifest>& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
               const FitOptions& options);

}  // namespace dtvnet
