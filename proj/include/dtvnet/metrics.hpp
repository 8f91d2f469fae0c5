#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtvnet/data.hpp"
#include "dtvnet/flow.hpp"
#include "dtvnet/tensor_types.hpp"
#include "dtvnet/training.hpp"

namespace dtvnet {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int64_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean over frames of 10*log10(1/MSE), with pixels remapped to [0,1].
/// A frame with zero error scores kPsnrCap.
double psnr(const FrameSequence& gen, const FrameSequence& real);

/// Single-scale SSIM on [0,1] pixels with an 11x11 Gaussian window (sigma 1.5),
/// valid region only; averaged over frames and channels.
double ssim(const FrameSequence& gen, const FrameSequence& real);

/// Mean squared difference between the flows `provider` estimates on each sequence.
double flow_mse(const FrameSequence& gen, const FrameSequence& real, const FlowEstimator& provider);

struct ClipScore {
  std::string clip_id;
  double psnr = 0.0;
  double ssim = 0.0;
  double flow_mse = 0.0;
  bool operator==(const ClipScore&) const = default;
};

struct ClipFailure {
  std::string clip_id;
  std::string error;
  bool operator==(const ClipFailure&) const = default;
};

struct EvalReport {
  // Means over per_clip (zero when no clip succeeded).
  double psnr = 0.0;
  double ssim = 0.0;
  double flow_mse = 0.0;
  std::vector<ClipScore> per_clip;
  std::vector<ClipFailure> failures;

  bool operator==(const EvalReport&) const = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

/// Returns {generated, ground truth}, both [3, T+1, H, W] starting at the shared first frame.
using ClipSynthesizer = std::function<std::pair<FrameSequence, FrameSequence>(const ClipManifest&)>;

/// Scores every clip; a clip that throws is recorded in `failures` and skipped.
/// PSNR and SSIM ignore the shared first frame.
EvalReport evaluate_clips(const std::vector<ClipManifest>& clips, const ClipSynthesizer& synthesize,
                          const FlowEstimator& provider);

/// Reconstruction protocol: each clip is regenerated from its first frame with
/// the motion code encoded from its own flows, then scored against the clip.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<ClipManifest>& clips, const FlowEstimator& provider);

}  // namespace dtvnet
