#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dtvnet {

inline constexpr int64_t kMotionDim = 512;

struct HW {
  int64_t height = 0;
  int64_t width = 0;
  bool operator==(const HW&) const = default;
};

std::string shape_string(const torch::Tensor& t);

// Throws ShapeError when `t` does not have exactly `expected` sizes; -1 matches any extent.
void expect_shape(const torch::Tensor& t, const std::vector<int64_t>& expected, const std::string& what);

/// Video tensor [3, T, H, W] with intensities normalized to [-1, 1].
class FrameSequence {
 public:
  FrameSequence() = default;
  explicit FrameSequence(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  int64_t frames() const { return data_.size(1); }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }
  HW hw() const { return {height(), width()}; }

  // [3, H, W] view of frame t.
  torch::Tensor frame(int64_t t) const { return data_.select(1, t); }
  FrameSequence slice(int64_t begin, int64_t end) const;

 private:
  torch::Tensor data_;
};

/// Dense optical flow [2, T, H, W] in pixels per frame; channel 0 is horizontal.
class FlowSequence {
 public:
  FlowSequence() = default;
  explicit FlowSequence(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  int64_t steps() const { return data_.size(1); }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }

 private:
  torch::Tensor data_;
};

/// Standardized 512-d motion code (zero mean, unit population std).
class MotionVector {
 public:
  MotionVector() = default;
  explicit MotionVector(torch::Tensor values);

  const torch::Tensor& tensor() const { return values_; }

 private:
  torch::Tensor values_;
};

}  // namespace dtvnet
