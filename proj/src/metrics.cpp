#include "dtvnet/metrics.hpp"

#include <cmath>

#include "dtvnet/errors.hpp"

namespace dtvnet {
using nlohmann::json;

namespace {

void require_same_shape(const FrameSequence& a, const FrameSequence& b, const char* what) {
  if (a.tensor().sizes() != b.tensor().sizes()) {
    throw ShapeError(std::string(what) + ": shapes differ (" + shape_string(a.tensor()) + " vs " +
                     shape_string(b.tensor()) + ")");
  }
}

// [3,T,H,W] in [-1,1] -> [3T,1,H,W] float64 in [0,1]
torch::Tensor unit_planes(const FrameSequence& s) {
  auto t = (s.tensor().to(torch::kFloat64) + 1.0) / 2.0;
  return t.reshape({-1, 1, s.height(), s.width()});
}

torch::Tensor gaussian_window() {
  auto g = torch::arange(kSsimWindow, torch::kFloat64) - static_cast<double>(kSsimWindow / 2);
  g = torch::exp(-(g * g) / (2.0 * kSsimSigma * kSsimSigma));
  g = g / g.sum();
  return torch::outer(g, g).reshape({1, 1, kSsimWindow, kSsimWindow});
}

}  // namespace

double psnr(const FrameSequence& gen, const FrameSequence& real) {
  require_same_shape(gen, real, "psnr");
  auto diff = (gen.tensor().to(torch::kFloat64) - real.tensor().to(torch::kFloat64)) / 2.0;
  auto mse = (diff * diff).mean({0, 2, 3});
  double total = 0.0;
  const auto* m = mse.data_ptr<double>();
  for (int64_t t = 0; t < mse.numel(); ++t) {
    total += m[t] > 0.0 ? std::min(kPsnrCap, 10.0 * std::log10(1.0 / m[t])) : kPsnrCap;
  }
  return total / static_cast<double>(mse.numel());
}

double ssim(const FrameSequence& gen, const FrameSequence& real) {
  require_same_shape(gen, real, "ssim");
  if (gen.height() < kSsimWindow || gen.width() < kSsimWindow) {
    throw ShapeError("ssim: frames " + std::to_string(gen.height()) + "x" + std::to_string(gen.width()) +
                     " are smaller than the 11x11 window");
  }
  const auto w = gaussian_window();
  const auto x = unit_planes(gen);
  const auto y = unit_planes(real);
  auto filt = [&](const torch::Tensor& v) { return torch::conv2d(v, w); };
  const auto mx = filt(x), my = filt(y);
  const auto sxx = filt(x * x) - mx * mx;
  const auto syy = filt(y * y) - my * my;
  const auto sxy = filt(x * y) - mx * my;
  const auto map = ((2.0 * mx * my + kSsimC1) * (2.0 * sxy + kSsimC2)) /
                   ((mx * mx + my * my + kSsimC1) * (sxx + syy + kSsimC2));
  return map.mean().item<double>();
}

double flow_mse(const FrameSequence& gen, const FrameSequence& real, const FlowEstimator& provider) {
  require_same_shape(gen, real, "flow_mse");
  if (gen.frames() < 2) throw ShapeError("flow_mse: need at least two frames");
  const auto a = estimate_flows(gen, provider).tensor().to(torch::kFloat64);
  const auto b = estimate_flows(real, provider).tensor().to(torch::kFloat64);
  return (a - b).pow(2).mean().item<double>();
}

void to_json(json& j, const EvalReport& r) {
  json clips = json::array();
  for (const auto& c : r.per_clip) {
    clips.push_back({{"clip_id", c.clip_id}, {"psnr", c.psnr}, {"ssim", c.ssim}, {"flow_mse", c.flow_mse}});
  }
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"clip_id", f.clip_id}, {"error", f.error}});
  j = {{"aggregate", {{"psnr", r.psnr}, {"ssim", r.ssim}, {"flow_mse", r.flow_mse}}},
       {"per_clip", clips},
       {"failures", failures}};
}

void from_json(const json& j, EvalReport& r) {
  const auto& agg = j.at("aggregate");
  r.psnr = agg.at("psnr").get<double>();
  r.ssim = agg.at("ssim").get<double>();
  r.flow_mse = agg.at("flow_mse").get<double>();
  r.per_clip.clear();
  for (const auto& c : j.at("per_clip")) {
    r.per_clip.push_back({c.at("clip_id").get<std::string>(), c.at("psnr").get<double>(), c.at("ssim").get<double>(),
                          c.at("flow_mse").get<double>()});
  }
  r.failures.clear();
  if (j.contains("failures")) {
    for (const auto& f : j.at("failures")) {
      r.failures.push_back({f.at("clip_id").get<std::string>(), f.at("error").get<std::string>()});
    }
  }
}

EvalReport evaluate_clips(const std::vector<ClipManifest>& clips, const ClipSynthesizer& synthesize,
                          const FlowEstimator& provider) {
  if (clips.empty()) throw InvalidArgument("evaluate: no clips to evaluate");
  EvalReport report;
  for (const auto& clip : clips) {
    try {
      const auto [gen, real] = synthesize(clip);
      require_same_shape(gen, real, "evaluate");
      if (gen.frames() < 2) throw ShapeError("evaluate: need at least two frames");
      const int64_t t = gen.frames();
      const auto gen_tail = gen.slice(1, t), real_tail = real.slice(1, t);
      ClipScore s{clip.clip_id, psnr(gen_tail, real_tail), ssim(gen_tail, real_tail), flow_mse(gen, real, provider)};
      if (!std::isfinite(s.psnr) || !std::isfinite(s.ssim) || !std::isfinite(s.flow_mse)) {
        throw Error("non-finite score");
      }
      report.per_clip.push_back(std::move(s));
    } catch (const std::exception& e) {
      report.failures.push_back({clip.clip_id, e.what()});
    }
  }
  if (!report.per_clip.empty()) {
    for (const auto& s : report.per_clip) {
      report.psnr += s.psnr;
      report.ssim += s.ssim;
      report.flow_mse += s.flow_mse;
    }
    const auto n = static_cast<double>(report.per_clip.size());
    report.psnr /= n;
    report.ssim /= n;
    report.flow_mse /= n;
  }
  return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<ClipManifest>& clips, const FlowEstimator& provider) {
  const ModelConfig cfg = ckpt.model_config();
  Model model(cfg, 0);
  load_parameters(ckpt, model);
  auto synthesize = [&](const ClipManifest& clip) {
    const TrainingClip data = load_training_clip(clip, cfg, &provider);
    torch::NoGradGuard no_grad;
    const auto real = data.frames.tensor();
    const auto i0 = real.select(1, 0);
    auto out = model.reconstruct(i0.unsqueeze(0), data.flows.tensor().unsqueeze(0));
    auto gen = torch::cat({i0.unsqueeze(1), out.frames.squeeze(0).to(real.scalar_type())}, 1);
    return std::make_pair(FrameSequence(gen), data.frames);
  };
  return evaluate_clips(clips, synthesize, provider);
}

}  // namespace dtvnet
