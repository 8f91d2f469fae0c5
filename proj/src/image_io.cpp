#include "dtvnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dtvnet/errors.hpp"

namespace dtvnet {

Image8 read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("frame file not found: " + path.string());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw LoadError("cannot decode image " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image8 out;
  out.height = img.height;
  out.width = img.width;
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw LoadError("cannot decode image " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.rgb.size() != static_cast<size_t>(image.height * image.width * 3)) {
    throw InvalidArgument("write_png: buffer size does not match dimensions");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw Error("cannot write image " + path.string() + ": " + img.message);
  }
}

float normalize_intensity(float v) { return v / 127.5f - 1.0f; }

float byte_to_unit(std::uint8_t v) { return normalize_intensity(static_cast<float>(v)); }

std::uint8_t unit_to_byte(float v) {
  const float scaled = std::nearbyint((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

torch::Tensor image_to_tensor(const Image8& image) {
  auto t = torch::empty({3, image.height, image.width}, torch::kFloat32);
  auto acc = t.accessor<float, 3>();
  for (int64_t y = 0; y < image.height; ++y) {
    for (int64_t x = 0; x < image.width; ++x) {
      const auto* px = &image.rgb[static_cast<size_t>((y * image.width + x) * 3)];
      for (int c = 0; c < 3; ++c) acc[c][y][x] = byte_to_unit(px[c]);
    }
  }
  return t;
}

Image8 tensor_to_image(const torch::Tensor& chw) {
  auto t = chw.detach().to(torch::kFloat32).contiguous();
  if (t.dim() != 3 || t.size(0) != 3) throw ShapeError("tensor_to_image: expected [3,H,W]");
  Image8 out;
  out.height = t.size(1);
  out.width = t.size(2);
  out.rgb.resize(static_cast<size_t>(out.height * out.width * 3));
  auto acc = t.accessor<float, 3>();
  for (int64_t y = 0; y < out.height; ++y) {
    for (int64_t x = 0; x < out.width; ++x) {
      auto* px = &out.rgb[static_cast<size_t>((y * out.width + x) * 3)];
      for (int c = 0; c < 3; ++c) px[c] = unit_to_byte(acc[c][y][x]);
    }
  }
  return out;
}

Image8 contact_sheet(const std::vector<std::vector<torch::Tensor>>& rows) {
  if (rows.empty() || rows.front().empty()) throw InvalidArgument("contact_sheet: no frames");
  const int64_t h = rows.front().front().size(1);
  const int64_t w = rows.front().front().size(2);
  size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  Image8 sheet;
  sheet.height = h * static_cast<int64_t>(rows.size());
  sheet.width = w * static_cast<int64_t>(cols);
  sheet.rgb.assign(static_cast<size_t>(sheet.height * sheet.width * 3), 0);
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      const Image8 tile = tensor_to_image(rows[r][c]);
      if (tile.height != h || tile.width != w) throw ShapeError("contact_sheet: frames differ in size");
      for (int64_t y = 0; y < h; ++y) {
        const auto* src = &tile.rgb[static_cast<size_t>(y * w * 3)];
        auto* dst = &sheet.rgb[static_cast<size_t>(((static_cast<int64_t>(r) * h + y) * sheet.width +
                                                    static_cast<int64_t>(c) * w) * 3)];
        std::memcpy(dst, src, static_cast<size_t>(w * 3));
      }
    }
  }
  return sheet;
}

}  // namespace dtvnet
