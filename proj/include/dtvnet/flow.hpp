#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "dtvnet/tensor_types.hpp"

namespace dtvnet {

/// Source of dense optical flow between consecutive frames. Providers are
/// frozen: nothing in training ever updates them.
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;

  // frames [3, T+1, H, W] -> flows [2, T, H, W]
  virtual FlowSequence estimate(const FrameSequence& frames) const = 0;
  virtual std::string name() const = 0;
  // Fingerprint of everything that determines the provider's output.
  virtual std::uint64_t state_digest() const = 0;
};

/// Exact for global translations of periodic content (such as synth_clip
/// output): recovers the per-step shift from the phase of the lowest DFT bin
/// along each axis and returns a uniform field.
class TranslationOracle final : public FlowEstimator {
 public:
  FlowSequence estimate(const FrameSequence& frames) const override;
  std::string name() const override { return "translation-oracle"; }
  std::uint64_t state_digest() const override;
};

/// Shells out to `command <frame_dir> <out.flow>` and reads the FlowFile it
/// writes. Calls are serialized; each uses a fresh temporary directory.
class ExternalCommandEstimator final : public FlowEstimator {
 public:
  explicit ExternalCommandEstimator(std::string command);

  FlowSequence estimate(const FrameSequence& frames) const override;
  std::string name() const override { return "external:" + command_; }
  std::uint64_t state_digest() const override;

 private:
  std::string command_;
  mutable std::mutex mutex_;
};

// Name of the environment variable holding the external estimator command.
inline constexpr const char* kFlowCommandEnv = "DTVNET_FLOW_CMD";

// Provider from DTVNET_FLOW_CMD, or nullptr when unset.
std::unique_ptr<FlowEstimator> flow_provider_from_env();

/// Checks the frame/flow contract around `estimator` (T+1 frames in, T flows out).
FlowSequence estimate_flows(const FrameSequence& frames, const FlowEstimator& estimator);

/// factor x factor mean pooling followed by division of every displacement by
/// `factor`, so vectors stay in pixels of the reduced grid.
FlowSequence downsample_flow(const FlowSequence& flows, int64_t factor);
// Batched form on [N, 2, T, H, W], differentiable.
torch::Tensor downsample_flow_batch(const torch::Tensor& flows, int64_t factor);

/// Moves `frame` [3,H,W] along forward displacements `flow` [2,H,W] by sampling
/// frame(x - flow(x)) bilinearly; samples outside the image clamp to the border.
torch::Tensor warp_frame(const torch::Tensor& frame, const torch::Tensor& flow);

// FlowFile: "DTVF", little-endian u32 t, h, w, then 2*t*h*w binary32 values
// in [channel, time, row, col] order.
inline constexpr std::uint64_t kFlowHeaderBytes = 16;
std::uint64_t flow_file_size(std::uint32_t t, std::uint32_t h, std::uint32_t w);
void write_flow_file(const FlowSequence& flows, const std::filesystem::path& path);
FlowSequence read_flow_file(const std::filesystem::path& path);

}  // namespace dtvnet
