#include <doctest.h>

#include "dtvnet/errors.hpp"
#include "dtvnet/harness.hpp"
#include "dtvnet/metrics.hpp"
#include "../support/oracles.hpp"
#include "../support/test_util.hpp"

using namespace dtvnet;
using testutil::TempDir;

namespace {

FrameSequence random_frames(std::vector<int64_t> shape, std::uint64_t seed) {
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  return FrameSequence(torch::rand(shape, g) * 2 - 1);
}

// Copies frames, returning a pair that evaluate_clips scores.
ClipSynthesizer fixed(const std::map<std::string, std::pair<FrameSequence, FrameSequence>>& table) {
  return [table](const ClipManifest& c) { return table.at(c.clip_id); };
}

std::vector<ClipManifest> ids(std::initializer_list<const char*> names) {
  std::vector<ClipManifest> out;
  for (const char* n : names) {
    ClipManifest m;
    m.clip_id = n;
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr examples") {
    const auto a = random_frames({3, 4, 16, 16}, 1);
    CHECK(psnr(a, a) == kPsnrCap);
    const auto base = FrameSequence(torch::full({3, 2, 8, 8}, -0.5f));
    const auto off = FrameSequence(torch::full({3, 2, 8, 8}, -0.3f));  // 0.1 apart on [0,1]
    CHECK(psnr(off, base) == doctest::Approx(20.0).epsilon(1e-5));
    CHECK_THROWS_AS(psnr(a, random_frames({3, 2, 16, 16}, 2)), ShapeError);
  }

  TEST_CASE("psnr matches the brute-force oracle") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto a = random_frames({3, 3, 12, 12}, 10 + s), b = random_frames({3, 3, 12, 12}, 30 + s);
      CHECK(std::abs(psnr(a, b) - oracle::psnr(a.tensor(), b.tensor())) < 1e-6);
    }
  }

  TEST_CASE("psnr falls as noise grows") {
    const auto clean = FrameSequence(random_frames({3, 2, 16, 16}, 3).tensor() * 0.5);
    auto g = at::make_generator<at::CPUGeneratorImpl>(4);
    const auto noise = torch::randn({3, 2, 16, 16}, g);
    double prev = kPsnrCap + 1;
    for (double amp : {0.01, 0.05, 0.2}) {
      const double p = psnr(FrameSequence((clean.tensor() + amp * noise).clamp(-1, 1)), clean);
      CHECK(p < prev);
      prev = p;
    }
  }

  TEST_CASE("ssim: identity, symmetry, range, inversion") {
    const auto a = random_frames({3, 2, 16, 16}, 5), b = random_frames({3, 2, 16, 16}, 6);
    CHECK(ssim(a, a) == 1.0);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) <= 1.0);
    const auto tex = synth_clip(2, 1, {32, 32}, {0.0, 0.0}).frames;
    CHECK(ssim(FrameSequence(-tex.tensor()), tex) < 0.5);
  }

  TEST_CASE("ssim matches a direct-formula implementation") {
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto a = random_frames({3, 2, 14, 15}, 40 + s);
      const auto b = FrameSequence((a.tensor() * 0.7 + random_frames({3, 2, 14, 15}, 50 + s).tensor() * 0.3));
      CHECK(std::abs(ssim(a, b) - oracle::ssim(a.tensor(), b.tensor())) < 1e-4);
    }
  }

  TEST_CASE("ssim rejects frames smaller than the window") {
    const auto a = random_frames({3, 1, 10, 16}, 7);
    CHECK_THROWS_AS(ssim(a, a), ShapeError);
  }

  TEST_CASE("flow_mse examples") {
    TranslationOracle oracle_provider;
    const auto a = synth_clip(3, 4, {32, 32}, {1.0, 0.0}).frames;
    const auto b = synth_clip(3, 4, {32, 32}, {2.0, 0.0}).frames;
    CHECK(flow_mse(a, a, oracle_provider) == 0.0);
    CHECK(flow_mse(a, b, oracle_provider) == doctest::Approx(0.5).epsilon(1e-4));
  }

  TEST_CASE("flow_mse equals brute-force elementwise computation") {
    struct Identityish final : FlowEstimator {
      // Frame differences of the first two channels as a stand-in flow.
      FlowSequence estimate(const FrameSequence& f) const override {
        const auto t = f.tensor();
        return FlowSequence((t.slice(1, 1) - t.slice(1, 0, -1)).slice(0, 0, 2) * 3.0);
      }
      std::string name() const override { return "diff"; }
      std::uint64_t state_digest() const override { return 1; }
    } provider;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto a = random_frames({3, 3, 8, 8}, 60 + s), b = random_frames({3, 3, 8, 8}, 80 + s);
      const double expect = oracle::mean_squared_difference(provider.estimate(a).tensor(), provider.estimate(b).tensor());
      CHECK(std::abs(flow_mse(a, b, provider) - expect) < 1e-9);
      CHECK(flow_mse(a, b, provider) >= 0.0);
    }
  }

  TEST_CASE("evaluate_clips aggregates per-clip means and records failures") {
    TranslationOracle provider;
    const auto c1 = synth_clip(1, 4, {16, 16}, {1.0, 0.0}).frames;
    const auto c2 = synth_clip(2, 4, {16, 16}, {0.0, 1.0}).frames;
    const auto n1 = FrameSequence((c1.tensor() * 0.9).clamp(-1, 1));
    const auto n2 = synth_clip(2, 4, {16, 16}, {0.5, 1.0}).frames;
    auto table = fixed({{"a", {n1, c1}}, {"b", {n2, c2}}});
    const auto r = evaluate_clips(ids({"a", "b"}), table, provider);
    REQUIRE(r.per_clip.size() == 2);
    CHECK(r.psnr == doctest::Approx((r.per_clip[0].psnr + r.per_clip[1].psnr) / 2));
    CHECK(r.ssim == doctest::Approx((r.per_clip[0].ssim + r.per_clip[1].ssim) / 2));
    CHECK(r.flow_mse == doctest::Approx((r.per_clip[0].flow_mse + r.per_clip[1].flow_mse) / 2));
    CHECK(r.failures.empty());

    const auto partial = evaluate_clips(ids({"a", "missing"}), table, provider);
    CHECK(partial.per_clip.size() == 1);
    REQUIRE(partial.failures.size() == 1);
    CHECK(partial.failures[0].clip_id == "missing");
    CHECK_THROWS_AS(evaluate_clips({}, table, provider), InvalidArgument);
  }

  TEST_CASE("ground truth scored against itself") {
    TranslationOracle provider;
    const auto c = synth_clip(1, 4, {16, 16}, {1.0, 1.0}).frames;
    const auto r = evaluate_clips(ids({"gt"}), fixed({{"gt", {c, c}}}), provider);
    CHECK(r.psnr == kPsnrCap);
    CHECK(r.ssim == 1.0);
    CHECK(r.flow_mse == 0.0);
  }

  TEST_CASE("report JSON round trip") {
    EvalReport r;
    r.psnr = 21.5;
    r.ssim = 0.75;
    r.flow_mse = 0.125;
    r.per_clip = {{"a", 20.0, 0.5, 0.25}, {"b", 23.0, 1.0, 0.0}};
    r.failures = {{"c", "boom"}};
    const nlohmann::json j = r;
    CHECK(j.contains("aggregate"));
    CHECK(j["per_clip"][0].contains("clip_id"));
    CHECK(nlohmann::json::parse(j.dump()).get<EvalReport>() == r);
  }

  TEST_CASE("evaluate with fresh weights gives a finite report below the cap") {
    TempDir dir("eval");
    const auto cfg = testutil::tiny_model(4, 16);
    const auto clips = read_manifest(write_synthetic_dataset(dir / "data", 2, 4, {16, 16}, 1));
    Trainer trainer(cfg, TrainConfig{});
    TranslationOracle provider;
    const auto r = evaluate(trainer.checkpoint(), clips, provider);
    REQUIRE(r.per_clip.size() == 2);
    CHECK(r.failures.empty());
    CHECK(std::isfinite(r.psnr));
    CHECK(r.psnr < kPsnrCap);
    CHECK(std::isfinite(r.ssim));
    CHECK(std::isfinite(r.flow_mse));
  }
}
