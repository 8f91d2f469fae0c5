#include "dtvnet/flow.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>
#include <vector>

#include "dtvnet/errors.hpp"
#include "dtvnet/image_io.hpp"

namespace dtvnet {
namespace fs = std::filesystem;

namespace {

constexpr char kFlowMagic[4] = {'D', 'T', 'V', 'F'};

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''"; else out += c;
  }
  return out + "'";
}

// Lowest-frequency DFT coefficients of the channel-summed frame along x and y.
std::pair<std::complex<double>, std::complex<double>> fundamental_bins(const torch::Tensor& chw) {
  auto gray = chw.to(torch::kFloat64).sum(0).contiguous();
  const int64_t h = gray.size(0), w = gray.size(1);
  auto acc = gray.accessor<double, 2>();
  std::vector<std::complex<double>> ex(static_cast<size_t>(w)), ey(static_cast<size_t>(h));
  for (int64_t x = 0; x < w; ++x) ex[x] = std::polar(1.0, -2.0 * std::numbers::pi * x / static_cast<double>(w));
  for (int64_t y = 0; y < h; ++y) ey[y] = std::polar(1.0, -2.0 * std::numbers::pi * y / static_cast<double>(h));
  std::complex<double> gx{}, gy{};
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      gx += acc[y][x] * ex[x];
      gy += acc[y][x] * ey[y];
    }
  }
  return {gx, gy};
}

double shift_from_phase(std::complex<double> before, std::complex<double> after, int64_t period) {
  const std::complex<double> ratio = after * std::conj(before);
  if (std::abs(before) * std::abs(after) < 1e-12) return 0.0;
  return -std::arg(ratio) * static_cast<double>(period) / (2.0 * std::numbers::pi);
}

}  // namespace

FlowSequence TranslationOracle::estimate(const FrameSequence& frames) const {
  const int64_t steps = frames.frames() - 1;
  auto flows = torch::empty({2, steps, frames.height(), frames.width()}, torch::kFloat32);
  auto prev = fundamental_bins(frames.frame(0).detach());
  for (int64_t t = 0; t < steps; ++t) {
    auto next = fundamental_bins(frames.frame(t + 1).detach());
    flows[0][t].fill_(shift_from_phase(prev.first, next.first, frames.width()));
    flows[1][t].fill_(shift_from_phase(prev.second, next.second, frames.height()));
    prev = next;
  }
  return FlowSequence(flows);
}

std::uint64_t TranslationOracle::state_digest() const { return std::hash<std::string>{}(name()); }

ExternalCommandEstimator::ExternalCommandEstimator(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw ProviderError("external flow estimator: empty command");
}

std::uint64_t ExternalCommandEstimator::state_digest() const { return std::hash<std::string>{}(name()); }

FlowSequence ExternalCommandEstimator::estimate(const FrameSequence& frames) const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::string templ = (fs::temp_directory_path() / "dtvnet-flow-XXXXXX").string();
  if (!::mkdtemp(templ.data())) throw ProviderError("external flow estimator: cannot create temp directory");
  const fs::path dir(templ);
  const fs::path frame_dir = dir / "frames";
  const fs::path out = dir / "flows.flow";
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{dir};

  fs::create_directories(frame_dir);
  for (int64_t t = 0; t < frames.frames(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04lld.png", static_cast<long long>(t));
    write_png(frame_dir / name, tensor_to_image(frames.frame(t)));
  }
  const std::string cmd = command_ + " " + shell_quote(frame_dir.string()) + " " + shell_quote(out.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw ProviderError("external flow estimator failed (status " + std::to_string(rc) + "): " + command_);
  if (!fs::exists(out)) throw ProviderError("external flow estimator produced no output: " + command_);
  FlowSequence flows = read_flow_file(out);
  if (flows.height() != frames.height() || flows.width() != frames.width()) {
    throw ProviderError("external flow estimator: unsupported resolution " + std::to_string(frames.height()) + "x" +
                        std::to_string(frames.width()) + " (returned " + shape_string(flows.tensor()) + ")");
  }
  return flows;
}

std::unique_ptr<FlowEstimator> flow_provider_from_env() {
  const char* cmd = std::getenv(kFlowCommandEnv);
  if (!cmd || !*cmd) return nullptr;
  return std::make_unique<ExternalCommandEstimator>(cmd);
}

FlowSequence estimate_flows(const FrameSequence& frames, const FlowEstimator& estimator) {
  if (frames.frames() < 2) throw ShapeError("estimate_flows: need at least 2 frames");
  FlowSequence flows = estimator.estimate(frames);
  if (flows.steps() != frames.frames() - 1) {
    throw ProviderError(estimator.name() + ": returned " + std::to_string(flows.steps()) + " flow steps for " +
                        std::to_string(frames.frames()) + " frames");
  }
  if (flows.height() != frames.height() || flows.width() != frames.width()) {
    throw ProviderError(estimator.name() + ": flow resolution does not match frames");
  }
  return flows;
}

torch::Tensor downsample_flow_batch(const torch::Tensor& flows, int64_t factor) {
  if (factor < 1) throw InvalidArgument("downsample_flow: factor must be >= 1");
  expect_shape(flows, {-1, 2, -1, -1, -1}, "downsample_flow");
  if (flows.size(3) % factor != 0 || flows.size(4) % factor != 0) {
    throw ShapeError("downsample_flow: factor " + std::to_string(factor) + " does not divide " +
                     std::to_string(flows.size(3)) + "x" + std::to_string(flows.size(4)));
  }
  if (factor == 1) return flows;
  auto pooled = torch::avg_pool3d(flows, {1, factor, factor}, {1, factor, factor});
  return pooled / static_cast<double>(factor);
}

FlowSequence downsample_flow(const FlowSequence& flows, int64_t factor) {
  return FlowSequence(downsample_flow_batch(flows.tensor().unsqueeze(0), factor).squeeze(0));
}

torch::Tensor warp_frame(const torch::Tensor& frame, const torch::Tensor& flow) {
  expect_shape(frame, {3, -1, -1}, "warp_frame frame");
  expect_shape(flow, {2, frame.size(1), frame.size(2)}, "warp_frame flow");
  auto src = frame.detach().to(torch::kFloat64).contiguous();
  auto fl = flow.detach().to(torch::kFloat64).contiguous();
  const int64_t h = src.size(1), w = src.size(2);
  auto out = torch::empty({3, h, w}, torch::kFloat64);
  auto s = src.accessor<double, 3>();
  auto f = fl.accessor<double, 3>();
  auto o = out.accessor<double, 3>();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double sx = std::clamp(static_cast<double>(x) - f[0][y][x], 0.0, static_cast<double>(w - 1));
      const double sy = std::clamp(static_cast<double>(y) - f[1][y][x], 0.0, static_cast<double>(h - 1));
      const auto x0 = static_cast<int64_t>(std::floor(sx));
      const auto y0 = static_cast<int64_t>(std::floor(sy));
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const int64_t y1 = std::min(y0 + 1, h - 1);
      const double ax = sx - static_cast<double>(x0);
      const double ay = sy - static_cast<double>(y0);
      for (int c = 0; c < 3; ++c) {
        double top = s[c][y0][x0];
        double bottom = s[c][y1][x0];
        if (ax != 0.0) {
          top = (1.0 - ax) * top + ax * s[c][y0][x1];
          bottom = (1.0 - ax) * bottom + ax * s[c][y1][x1];
        }
        o[c][y][x] = ay != 0.0 ? (1.0 - ay) * top + ay * bottom : top;
      }
    }
  }
  return out.to(frame.scalar_type());
}

std::uint64_t flow_file_size(std::uint32_t t, std::uint32_t h, std::uint32_t w) {
  std::uint64_t n = 0;
  if (__builtin_mul_overflow(static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(h), &n) ||
      __builtin_mul_overflow(n, static_cast<std::uint64_t>(w), &n) || __builtin_mul_overflow(n, 8ULL, &n) ||
      __builtin_add_overflow(n, kFlowHeaderBytes, &n)) {
    throw FormatError("flow file: dims overflow (t*h*w too large)");
  }
  return n;
}

void write_flow_file(const FlowSequence& flows, const fs::path& path) {
  auto data = flows.tensor().detach().to(torch::kFloat32).contiguous();
  const auto t = static_cast<std::uint32_t>(data.size(1));
  const auto h = static_cast<std::uint32_t>(data.size(2));
  const auto w = static_cast<std::uint32_t>(data.size(3));
  const std::uint64_t total = flow_file_size(t, h, w);

  std::vector<char> buf;
  buf.reserve(total);
  buf.insert(buf.end(), kFlowMagic, kFlowMagic + 4);
  put_u32(buf, t);
  put_u32(buf, h);
  put_u32(buf, w);
  const float* p = data.data_ptr<float>();
  for (int64_t i = 0; i < data.numel(); ++i) put_u32(buf, std::bit_cast<std::uint32_t>(p[i]));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write flow file " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("cannot write flow file " + path.string());
  }
  fs::rename(tmp, path);
}

FlowSequence read_flow_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open flow file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kFlowHeaderBytes) throw FormatError("flow file " + path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), kFlowMagic, 4) != 0) throw FormatError("flow file " + path.string() + ": bad magic");
  const std::uint32_t t = get_u32(&bytes[4]);
  const std::uint32_t h = get_u32(&bytes[8]);
  const std::uint32_t w = get_u32(&bytes[12]);
  if (t == 0) throw FormatError("flow file " + path.string() + ": t must be >= 1");
  if (h == 0 || w == 0) throw FormatError("flow file " + path.string() + ": h and w must be >= 1");
  const std::uint64_t expected = flow_file_size(t, h, w);
  if (bytes.size() < expected) throw FormatError("flow file " + path.string() + ": truncated payload");
  if (bytes.size() > expected) throw FormatError("flow file " + path.string() + ": trailing bytes after payload");

  auto data = torch::empty({2, static_cast<int64_t>(t), static_cast<int64_t>(h), static_cast<int64_t>(w)},
                           torch::kFloat32);
  float* p = data.data_ptr<float>();
  const unsigned char* src = bytes.data() + kFlowHeaderBytes;
  for (int64_t i = 0; i < data.numel(); ++i) p[i] = std::bit_cast<float>(get_u32(src + 4 * i));
  return FlowSequence(data);
}

}  // namespace dtvnet
