#include "dtvnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "dtvnet/errors.hpp"
#include "dtvnet/image_io.hpp"

namespace dtvnet {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw FormatError("split: expected one of train/val/test, got \"" + s + "\"");
}

std::vector<ClipManifest> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw FormatError("manifest " + path.string() + ": top level must be a list");

  const fs::path base = fs::absolute(path).parent_path();
  std::vector<ClipManifest> clips;
  std::set<std::string> seen;
  for (const auto& rec : doc) {
    ClipManifest m;
    try {
      m.clip_id = rec.at("clip_id").get<std::string>();
      for (const auto& f : rec.at("frames")) m.frame_paths.push_back((base / f.get<std::string>()).lexically_normal());
      if (rec.contains("flow_cache") && !rec["flow_cache"].is_null()) {
        m.flow_cache_path = (base / rec["flow_cache"].get<std::string>()).lexically_normal();
      }
      m.split = parse_split(rec.at("split").get<std::string>());
      const auto& hw = rec.at("native_hw");
      m.native_hw = {hw.at(0).get<int64_t>(), hw.at(1).get<int64_t>()};
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path.string() + ": " + e.what());
    }
    if (!seen.insert(m.clip_id).second) throw FormatError("manifest: duplicate clip_id \"" + m.clip_id + "\"");
    clips.push_back(std::move(m));
  }
  return clips;
}

void write_manifest(const fs::path& path, const std::vector<ClipManifest>& clips) {
  const fs::path base = fs::absolute(path).parent_path();
  json doc = json::array();
  std::set<std::string> seen;
  for (const auto& m : clips) {
    if (!seen.insert(m.clip_id).second) throw InvalidArgument("manifest: duplicate clip_id \"" + m.clip_id + "\"");
    json rec;
    rec["clip_id"] = m.clip_id;
    json frames = json::array();
    for (const auto& p : m.frame_paths) frames.push_back(fs::absolute(p).lexically_relative(base).generic_string());
    rec["frames"] = frames;
    rec["flow_cache"] = m.flow_cache_path
                            ? json(fs::absolute(*m.flow_cache_path).lexically_relative(base).generic_string())
                            : json(nullptr);
    rec["split"] = to_string(m.split);
    rec["native_hw"] = {m.native_hw.height, m.native_hw.width};
    doc.push_back(rec);
  }
  if (base.has_relative_path()) fs::create_directories(base);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

torch::Tensor resize_bilinear(const torch::Tensor& x, HW target) {
  if (target.height < 8 || target.width < 8) throw InvalidArgument("resize: target dims must be at least 8x8");
  const bool has_time = x.dim() == 4;
  if (x.size(-2) == target.height && x.size(-1) == target.width) return x;
  // Frames are resized independently: fold time into the batch axis.
  auto batch = has_time ? x.permute({1, 0, 2, 3}) : x.unsqueeze(0);
  auto out = torch::nn::functional::interpolate(
      batch, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<int64_t>{target.height, target.width})
                 .mode(torch::kBilinear)
                 .align_corners(false));
  out = out.clamp(-1.0, 1.0);
  return has_time ? out.permute({1, 0, 2, 3}).contiguous() : out.squeeze(0);
}

FrameSequence load_clip(const ClipManifest& manifest, HW target, int64_t t_frames) {
  if (t_frames < 1) throw InvalidArgument("load_clip: t_frames must be >= 1");
  if (target.height < 8 || target.width < 8) throw InvalidArgument("load_clip: target dims must be at least 8x8");
  if (static_cast<int64_t>(manifest.frame_paths.size()) < t_frames + 1) {
    throw ShapeError("load_clip: clip " + manifest.clip_id + " has " + std::to_string(manifest.frame_paths.size()) +
                     " frames, need " + std::to_string(t_frames + 1));
  }
  std::vector<torch::Tensor> frames;
  frames.reserve(static_cast<size_t>(t_frames + 1));
  for (int64_t t = 0; t <= t_frames; ++t) {
    const auto& p = manifest.frame_paths[static_cast<size_t>(t)];
    frames.push_back(resize_bilinear(image_to_tensor(read_png(p)), target));
  }
  return FrameSequence(torch::stack(frames, 1));
}

namespace {

// 53-bit uniform in [0, 1); independent of the standard library's distributions.
double unit_uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

struct Wave {
  int fx;
  int fy;
  double amplitude;
  double phase;
};

}  // namespace

SyntheticClip synth_clip(std::uint64_t seed, int64_t t_frames, HW hw, std::array<double, 2> velocity) {
  if (t_frames < 1) throw InvalidArgument("synth_clip: t_frames must be >= 1");
  if (hw.height < 8 || hw.width < 8) throw InvalidArgument("synth_clip: dims must be at least 8x8");
  const double limit = static_cast<double>(std::min(hw.height, hw.width)) / static_cast<double>(t_frames);
  if (std::abs(velocity[0]) >= limit || std::abs(velocity[1]) >= limit) {
    throw InvalidArgument("synth_clip: velocity components must be below min(h,w)/t_frames");
  }

  std::mt19937_64 gen(seed);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  // Two shared fundamentals along each axis, then six random waves per channel.
  const double base_phase_x = kTwoPi * unit_uniform(gen);
  const double base_phase_y = kTwoPi * unit_uniform(gen);
  std::array<std::vector<Wave>, 3> waves;
  std::array<double, 3> offset{};
  for (int c = 0; c < 3; ++c) {
    waves[c].push_back({1, 0, 0.15, base_phase_x});
    waves[c].push_back({0, 1, 0.15, base_phase_y});
    for (int k = 0; k < 6; ++k) {
      int fx = 0, fy = 0;
      while (fx == 0 && fy == 0) {
        fx = static_cast<int>(gen() % 5) - 2;
        fy = static_cast<int>(gen() % 5) - 2;
      }
      waves[c].push_back({fx, fy, 0.03 + 0.06 * unit_uniform(gen), kTwoPi * unit_uniform(gen)});
    }
    offset[c] = 0.2 * unit_uniform(gen) - 0.1;
  }

  const int64_t n = t_frames + 1;
  auto frames = torch::empty({3, n, hw.height, hw.width}, torch::kFloat32);
  auto acc = frames.accessor<float, 4>();
  for (int64_t t = 0; t < n; ++t) {
    const double sx = velocity[0] * static_cast<double>(t);
    const double sy = velocity[1] * static_cast<double>(t);
    for (int64_t y = 0; y < hw.height; ++y) {
      const double v = (static_cast<double>(y) - sy) / static_cast<double>(hw.height);
      for (int64_t x = 0; x < hw.width; ++x) {
        const double u = (static_cast<double>(x) - sx) / static_cast<double>(hw.width);
        for (int c = 0; c < 3; ++c) {
          double value = offset[c];
          for (const auto& w : waves[c]) value += w.amplitude * std::sin(kTwoPi * (w.fx * u + w.fy * v) + w.phase);
          acc[c][t][y][x] = static_cast<float>(value);
        }
      }
    }
  }

  auto flows = torch::empty({2, t_frames, hw.height, hw.width}, torch::kFloat32);
  flows.select(0, 0).fill_(velocity[0]);
  flows.select(0, 1).fill_(velocity[1]);
  return {FrameSequence(frames), FlowSequence(flows)};
}

std::vector<ClipManifest> split_dataset(std::vector<ClipManifest> manifests, std::array<double, 3> ratios,
                                        std::uint64_t seed) {
  if (manifests.empty()) throw InvalidArgument("split_dataset: empty manifest list");
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw InvalidArgument("split_dataset: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split_dataset: ratios must sum to 1");

  const auto n = static_cast<int64_t>(manifests.size());
  std::array<int64_t, 3> counts{};
  std::array<double, 3> remainders{};
  int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<int64_t>(std::floor(quota));
    remainders[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (int k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++counts[order[k]];

  std::vector<size_t> perm(manifests.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 gen(seed);
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[gen() % i]);

  const std::array<Split, 3> kinds{Split::kTrain, Split::kVal, Split::kTest};
  size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    for (int64_t k = 0; k < counts[i]; ++k) manifests[perm[pos++]].split = kinds[i];
  }
  return manifests;
}

}  // namespace dtvnet
