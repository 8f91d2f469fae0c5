#include "dtvnet/tensor_types.hpp"

#include <sstream>

#include "dtvnet/errors.hpp"

namespace dtvnet {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << '[';
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) os << ',';
    os << t.size(i);
  }
  os << ']';
  return os.str();
}

void expect_shape(const torch::Tensor& t, const std::vector<int64_t>& expected, const std::string& what) {
  bool ok = t.defined() && t.dim() == static_cast<int64_t>(expected.size());
  for (size_t i = 0; ok && i < expected.size(); ++i) {
    if (expected[i] >= 0 && t.size(static_cast<int64_t>(i)) != expected[i]) ok = false;
  }
  if (ok) return;
  std::ostringstream os;
  os << what << ": expected shape [";
  for (size_t i = 0; i < expected.size(); ++i) {
    if (i) os << ',';
    if (expected[i] < 0) os << '*'; else os << expected[i];
  }
  os << "], got " << (t.defined() ? shape_string(t) : std::string("undefined"));
  throw ShapeError(os.str());
}

FrameSequence::FrameSequence(torch::Tensor data) : data_(std::move(data)) {
  expect_shape(data_, {3, -1, -1, -1}, "FrameSequence");
  if (data_.size(1) < 1) throw ShapeError("FrameSequence: time must be >= 1");
  if (!data_.is_floating_point()) throw ShapeError("FrameSequence: floating-point tensor required");
  torch::NoGradGuard no_grad;
  if (data_.numel() > 0) {
    const double lo = data_.min().item<double>();
    const double hi = data_.max().item<double>();
    if (!(lo >= -1.0 && hi <= 1.0)) {
      throw InvalidArgument("FrameSequence: values must lie in [-1, 1], got range [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
    }
  }
}

FrameSequence FrameSequence::slice(int64_t begin, int64_t end) const {
  return FrameSequence(data_.slice(1, begin, end));
}

FlowSequence::FlowSequence(torch::Tensor data) : data_(std::move(data)) {
  expect_shape(data_, {2, -1, -1, -1}, "FlowSequence");
  if (data_.size(1) < 1) throw ShapeError("FlowSequence: time must be >= 1");
  if (!data_.is_floating_point()) throw ShapeError("FlowSequence: floating-point tensor required");
  torch::NoGradGuard no_grad;
  if (!torch::isfinite(data_).all().item<bool>()) throw InvalidArgument("FlowSequence: non-finite values");
}

MotionVector::MotionVector(torch::Tensor values) : values_(std::move(values)) {
  expect_shape(values_, {kMotionDim}, "MotionVector");
  torch::NoGradGuard no_grad;
  if (!torch::isfinite(values_).all().item<bool>()) throw InvalidArgument("MotionVector: non-finite values");
}

}  // namespace dtvnet
