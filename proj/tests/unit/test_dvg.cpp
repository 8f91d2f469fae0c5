#include <doctest.h>

#include "dtvnet/dvg.hpp"
#include "dtvnet/errors.hpp"
#include "dtvnet/ofe.hpp"
#include "../support/oracles.hpp"
#include "../support/test_util.hpp"

using namespace dtvnet;

namespace {

DynamicVideoGenerator make_generator(int64_t t, int64_t hw, int64_t base, std::uint64_t seed) {
  DVGConfig cfg;
  cfg.t_frames = t;
  cfg.image_hw = {hw, hw};
  cfg.base_channels = base;
  DynamicVideoGenerator gen(cfg);
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  gen->reset_parameters(g);
  return gen;
}

torch::Tensor random_image(int64_t hw, std::uint64_t seed) {
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({3, hw, hw}, g) * 2 - 1;
}

torch::Tensor param(torch::nn::Module& m, const std::string& name) {
  for (const auto& p : m.named_parameters()) {
    if (p.key() == name) return p.value();
  }
  throw std::runtime_error("no parameter " + name);
}

// Per-channel mean and population std over every non-channel dim of [C, ...].
std::vector<std::pair<double, double>> channel_moments(const torch::Tensor& x) {
  std::vector<std::pair<double, double>> out;
  for (int64_t c = 0; c < x.size(0); ++c) out.push_back(oracle::moments(x[c]));
  return out;
}

}  // namespace

TEST_SUITE("dvg") {
  TEST_CASE("shared encoder maps [3,128,128] to [256,32,32]") {
    auto gen = make_generator(2, 128, 64, 1);
    torch::NoGradGuard ng;
    const auto a = encode_image(random_image(128, 2), gen);
    CHECK(a.data.sizes() == torch::IntArrayRef({256, 32, 32}));
    CHECK(torch::equal(encode_image(random_image(128, 2), gen).data, a.data));
    CHECK((encode_image(random_image(128, 3), gen).data - a.data).abs().sum().item<float>() > 0.0f);
    CHECK_THROWS_AS(encode_image(random_image(64, 2), gen), ShapeError);
  }

  TEST_CASE("style mapping yields n styles sized to the motion stream") {
    auto gen = make_generator(4, 32, 16, 1);
    torch::NoGradGuard ng;
    const auto styles = style_mapping(sample_motion_vector(0), gen, 6);
    REQUIRE(styles.size() == 6);
    for (size_t i = 0; i < styles.size(); ++i) {
      CHECK(styles[i].scale.sizes() == torch::IntArrayRef({64}));
      CHECK(styles[i].shift.sizes() == torch::IntArrayRef({64}));
      CHECK(styles[i].layer_index == static_cast<int64_t>(i) + 1);
    }
    CHECK_THROWS_AS(style_mapping(sample_motion_vector(0), gen, 5), ShapeError);
  }

  TEST_CASE("zero mapping weights give identity modulation") {
    auto gen = make_generator(4, 32, 8, 1);
    torch::NoGradGuard ng;
    for (auto& p : gen->style->parameters()) p.zero_();
    for (const auto& s : style_mapping(sample_motion_vector(3), gen, 6)) {
      CHECK(torch::equal(s.scale, torch::ones_like(s.scale)));
      CHECK(torch::equal(s.shift, torch::zeros_like(s.shift)));
    }
  }

  TEST_CASE("style mapping matches a naive matrix-multiply oracle") {
    auto gen = make_generator(4, 32, 8, 1);
    testutil::randomize_style_maps(gen, 5, 0.05);
    {
      torch::NoGradGuard ng;
      auto g = at::make_generator<at::CPUGeneratorImpl>(6);
      for (auto& p : gen->style->parameters()) p.normal_(0.0, 0.05, g);
    }
    torch::NoGradGuard ng;
    const auto f = sample_motion_vector(7);
    const auto styles = style_mapping(f, gen, 6);
    for (int i = 0; i < 6; ++i) {
      const auto k = std::to_string(i);
      const auto adapted = oracle::linear(param(*gen->style, "adapt." + k + ".weight"),
                                          param(*gen->style, "adapt." + k + ".bias"), f.tensor());
      const auto a = torch::tensor(adapted, torch::kFloat64);
      const auto scale = oracle::linear(param(*gen->style, "scale." + k + ".weight"),
                                        param(*gen->style, "scale." + k + ".bias"), a);
      const auto shift = oracle::linear(param(*gen->style, "shift." + k + ".weight"),
                                        param(*gen->style, "shift." + k + ".bias"), a);
      for (size_t c = 0; c < scale.size(); ++c) {
        CHECK(styles[i].scale[c].item<double>() == doctest::Approx(1.0 + scale[c]).epsilon(1e-5));
        CHECK(styles[i].shift[c].item<double>() == doctest::Approx(shift[c]).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("adain: standardized input, scale 2, shift 3") {
    auto g = at::make_generator<at::CPUGeneratorImpl>(1);
    auto x = torch::randn({4, 3, 5, 5}, g, torch::kFloat64);
    x = (x - x.mean({1, 2, 3}, true)) / x.std({1, 2, 3}, false, true);
    const auto out = adain(x, AdaptiveStyle{torch::full({4}, 2.0, torch::kFloat64), torch::full({4}, 3.0, torch::kFloat64), 1});
    for (const auto& [m, s] : channel_moments(out)) {
      CHECK(m == doctest::Approx(3.0).epsilon(1e-9));
      CHECK(std::abs(s - 2.0) < 1e-4);
    }
  }

  TEST_CASE("adain with identity style standardizes (matches two-pass oracle)") {
    auto g = at::make_generator<at::CPUGeneratorImpl>(2);
    const auto x = torch::randn({3, 2, 4, 4}, g, torch::kFloat64) * 4 + 1.5;
    const auto out = adain(x, AdaptiveStyle{torch::ones({3}, torch::kFloat64), torch::zeros({3}, torch::kFloat64), 1});
    for (int64_t c = 0; c < 3; ++c) {
      const auto [m, s] = oracle::moments(x[c]);
      const auto expect = (x[c] - m) / std::sqrt(s * s + 1e-5);
      CHECK((out[c] - expect).abs().max().item<double>() < 1e-10);
    }
  }

  TEST_CASE("adain moments on random draws") {
    auto g = at::make_generator<at::CPUGeneratorImpl>(3);
    for (int draw = 0; draw < 10; ++draw) {
      const auto x = torch::randn({8, 3, 6, 6}, g) * (torch::rand({8, 1, 1, 1}, g) * 3 + 0.5);
      const auto scale = torch::randn({8}, g) * 2, shift = torch::randn({8}, g) * 3;
      const auto out = adain(x, AdaptiveStyle{scale, shift, 1});
      const auto mom = channel_moments(out);
      for (int64_t c = 0; c < 8; ++c) {
        CHECK(std::abs(mom[c].first - shift[c].item<double>()) < 1e-4);
        CHECK(std::abs(mom[c].second - std::abs(scale[c].item<double>())) < 1e-4);
      }
    }
  }

  TEST_CASE("motion stream shapes, determinism and dependence on f") {
    auto gen = make_generator(8, 32, 16, 1);
    testutil::randomize_style_maps(gen, 2);
    torch::NoGradGuard ng;
    const auto shared = encode_image(random_image(32, 4), gen);
    const auto s1 = style_mapping(sample_motion_vector(1), gen, 6);
    const auto s2 = style_mapping(sample_motion_vector(2), gen, 6);
    const auto [flows, feat] = motion_stream(shared, s1, gen);
    CHECK(flows.tensor().sizes() == torch::IntArrayRef({2, 8, 16, 16}));
    CHECK(feat.sizes() == torch::IntArrayRef({64, 8, 16, 16}));
    CHECK(torch::equal(motion_stream(shared, s1, gen).first.tensor(), flows.tensor()));
    CHECK((motion_stream(shared, s2, gen).first.tensor() - flows.tensor()).abs().sum().item<float>() > 0.0f);
    CHECK_THROWS_AS(motion_stream(shared, std::vector<AdaptiveStyle>(s1.begin(), s1.begin() + 3), gen), ShapeError);
  }

  TEST_CASE("content stream keeps shape and is the identity with zero residual weights") {
    auto gen = make_generator(2, 32, 16, 1);
    torch::NoGradGuard ng;
    const auto shared = encode_image(random_image(32, 5), gen);
    const auto out = content_stream(shared, gen);
    CHECK(out.sizes() == shared.data.sizes());
    CHECK(torch::equal(content_stream(shared, gen), out));
    for (auto& p : gen->content->parameters()) p.zero_();
    CHECK(torch::equal(content_stream(shared, gen), shared.data));
    CHECK_THROWS_AS(content_stream(SharedFeature{torch::zeros({3, 8, 8})}, gen), ShapeError);
  }

  TEST_CASE("decoder output is bounded, shaped and deterministic") {
    auto gen = make_generator(4, 32, 8, 1);
    torch::NoGradGuard ng;
    const auto shared = encode_image(random_image(32, 6), gen);
    const auto [flows, feat] = motion_stream(shared, style_mapping(sample_motion_vector(0), gen, 6), gen);
    const auto content = content_stream(shared, gen);
    const auto video = decode(feat * 50.0, flows, content, gen);
    CHECK(video.tensor().sizes() == torch::IntArrayRef({3, 4, 32, 32}));
    CHECK(video.tensor().abs().max().item<float>() <= 1.0f);
    CHECK(torch::equal(decode(feat * 50.0, flows, content, gen).tensor(), video.tensor()));
    CHECK_THROWS_AS(decode(feat.slice(1, 0, 2), flows, content, gen), ShapeError);
  }

  TEST_CASE("generate_video: shapes, determinism, diversity") {
    auto gen = make_generator(8, 32, 16, 1);
    testutil::randomize_style_maps(gen, 3);
    const auto i0 = random_image(32, 7);
    const auto [v1, u1] = generate_video(i0, sample_motion_vector(1), gen);
    const auto [v2, u2] = generate_video(i0, sample_motion_vector(2), gen);
    CHECK(v1.tensor().sizes() == torch::IntArrayRef({3, 8, 32, 32}));
    CHECK(u1.tensor().sizes() == torch::IntArrayRef({2, 8, 16, 16}));
    CHECK(torch::equal(generate_video(i0, sample_motion_vector(1), gen).first.tensor(), v1.tensor()));
    CHECK((v1.tensor() - v2.tensor()).abs().mean().item<float>() > 0.0f);
  }

  TEST_CASE("frames differ across time steps") {
    auto gen = make_generator(8, 32, 16, 4);
    const auto [v, u] = generate_video(random_image(32, 8), sample_motion_vector(1), gen);
    for (int64_t t = 1; t < 8; ++t) CHECK((v.frame(t) - v.frame(t - 1)).abs().sum().item<float>() > 0.0f);
  }

  TEST_CASE("zeroed style maps make the output independent of f") {
    auto gen = make_generator(4, 32, 8, 1);
    testutil::randomize_style_maps(gen, 4);
    gen->zero_style_maps();
    const auto i0 = random_image(32, 9);
    const auto a = generate_video(i0, sample_motion_vector(1), gen);
    const auto b = generate_video(i0, sample_motion_vector(99), gen);
    CHECK(torch::equal(a.first.tensor(), b.first.tensor()));
    CHECK(torch::equal(a.second.tensor(), b.second.tensor()));
  }

  TEST_CASE("outputs stay finite for constant and random inputs") {
    auto gen = make_generator(4, 32, 8, 2);
    for (const auto& i0 : {torch::zeros({3, 32, 32}), torch::ones({3, 32, 32}), random_image(32, 1)}) {
      const auto [v, u] = generate_video(i0, sample_motion_vector(5), gen);
      CHECK(torch::isfinite(v.tensor()).all().item<bool>());
      CHECK(torch::isfinite(u.tensor()).all().item<bool>());
    }
  }

  TEST_CASE("generator gradients match central differences per submodule (float64)") {
    auto gen = make_generator(2, 16, 4, 5);
    testutil::randomize_style_maps(gen, 6);
    gen->to(torch::kFloat64);
    const auto i0 = random_image(16, 10).to(torch::kFloat64).unsqueeze(0);
    const auto f = sample_motion_vector(3).tensor().to(torch::kFloat64).unsqueeze(0);
    auto loss = [&] { return gen->forward(i0, f).frames.pow(2).sum(); };
    for (const char* sub : {"encoder.", "style.", "motion.", "content.", "decoder."}) {
      std::vector<std::pair<std::string, torch::Tensor>> params;
      for (const auto& p : gen->named_parameters()) {
        if (p.key().rfind(sub, 0) == 0) params.emplace_back(p.key(), p.value());
      }
      REQUIRE(!params.empty());
      for (const auto& e : oracle::gradcheck(loss, params, 6, 13)) {
        INFO(e.parameter, "[", e.index, "] analytic ", e.analytic, " numeric ", e.numeric);
        CHECK(e.rel_error < 1e-3);
      }
    }
  }
}
