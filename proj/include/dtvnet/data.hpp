#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dtvnet/tensor_types.hpp"

namespace dtvnet {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One clip record of a dataset manifest. Paths are absolute in memory and
/// stored relative to the manifest directory on disk.
struct ClipManifest {
  std::string clip_id;
  std::vector<std::filesystem::path> frame_paths;
  std::optional<std::filesystem::path> flow_cache_path;
  Split split = Split::kTrain;
  HW native_hw;

  bool operator==(const ClipManifest&) const = default;
};

std::vector<ClipManifest> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ClipManifest>& clips);

/// Loads frames 0..t_frames of a clip, resized bilinearly to `target`.
/// Result is [3, t_frames + 1, H, W] in [-1, 1].
FrameSequence load_clip(const ClipManifest& manifest, HW target, int64_t t_frames);

// Bilinear resize of [C, H, W] or [C, T, H, W] with half-pixel centers.
torch::Tensor resize_bilinear(const torch::Tensor& x, HW target);

struct SyntheticClip {
  FrameSequence frames;  // [3, T + 1, H, W]
  FlowSequence flows;    // [2, T, H, W], every vector equals the velocity
};

/// Smooth periodic texture translated by `velocity` (dx, dy) pixels per frame
/// with wraparound. Frequencies are integer cycles per image so the pattern
/// tiles seamlessly and every translate is evaluated analytically.
SyntheticClip synth_clip(std::uint64_t seed, int64_t t_frames, HW hw, std::array<double, 2> velocity);

/// Deterministically assigns every clip to exactly one split; counts follow
/// `ratios` by largest-remainder rounding.
std::vector<ClipManifest> split_dataset(std::vector<ClipManifest> manifests, std::array<double, 3> ratios,
                                        std::uint64_t seed);

}  // namespace dtvnet
