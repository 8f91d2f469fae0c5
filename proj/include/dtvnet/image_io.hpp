#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace dtvnet {

/// Interleaved 8-bit RGB raster.
struct Image8 {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<std::uint8_t> rgb;
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// Affine map from the 8-bit intensity scale [0, 255] onto [-1, 1].
float normalize_intensity(float v);
// byte_to_unit and unit_to_byte are exact inverses on {0..255}.
float byte_to_unit(std::uint8_t v);
std::uint8_t unit_to_byte(float v);

// [3, H, W] float tensor in [-1, 1].
torch::Tensor image_to_tensor(const Image8& image);
Image8 tensor_to_image(const torch::Tensor& chw);

// Tiles equally sized [3, H, W] frames into a rows x cols grid.
Image8 contact_sheet(const std::vector<std::vector<torch::Tensor>>& rows);

}  // namespace dtvnet
