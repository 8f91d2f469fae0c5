#include <doctest.h>

#include "dtvnet/adversarial.hpp"
#include "dtvnet/errors.hpp"
#include "../support/oracles.hpp"
#include "../support/test_util.hpp"

using namespace dtvnet;

namespace {

VideoCritic make_critic(int64_t t, int64_t hw, int64_t base, std::uint64_t seed) {
  CriticConfig cfg;
  cfg.base_channels = base;
  VideoCritic critic(cfg, t, HW{hw, hw});
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  critic->reset_parameters(g);
  return critic;
}

torch::Tensor random_video(std::vector<int64_t> shape, std::uint64_t seed, torch::ScalarType dtype = torch::kFloat32) {
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand(shape, g, dtype) * 2 - 1;
}

// D(V) = <W, V> per sample.
CriticFn linear_critic(const torch::Tensor& w) {
  return [w](const torch::Tensor& v) { return (v * w.unsqueeze(0)).flatten(1).sum(1); };
}

torch::Tensor weight_with_norm(std::vector<int64_t> shape, double norm, std::uint64_t seed) {
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto w = torch::randn(shape, g, torch::kFloat64);
  return w * (norm / w.norm().item<double>());
}

}  // namespace

TEST_SUITE("adversarial") {
  TEST_CASE("critic scores one scalar per video, deterministically") {
    auto critic = make_critic(8, 32, 8, 1);
    const auto video = FrameSequence(random_video({3, 8, 32, 32}, 2));
    const double s = critic_score(video, critic);
    CHECK(std::isfinite(s));
    CHECK(critic_score(video, critic) == s);
    torch::NoGradGuard ng;
    CHECK(critic->forward(random_video({5, 3, 8, 32, 32}, 3)).sizes() == torch::IntArrayRef({5}));
    CHECK_THROWS_AS(critic->forward(random_video({1, 3, 4, 32, 32}, 3)), ShapeError);
  }

  TEST_CASE("paper-size critic accepts [3,32,128,128]") {
    auto critic = make_critic(32, 128, 8, 1);
    CHECK(std::isfinite(critic_score(FrameSequence(random_video({3, 32, 128, 128}, 4)), critic)));
    CHECK(critic_channels(CriticConfig{}) == std::vector<int64_t>{64, 128, 256, 256, 256, 512});
  }

  TEST_CASE("a bias-only critic scores every video with its bias") {
    auto critic = make_critic(4, 16, 4, 1);
    torch::NoGradGuard ng;
    for (auto& p : critic->parameters()) p.zero_();
    critic->head->bias.fill_(0.75);
    CHECK(critic_score(FrameSequence(random_video({3, 4, 16, 16}, 5)), critic) == doctest::Approx(0.75));
    CHECK(critic_score(FrameSequence(torch::zeros({3, 4, 16, 16})), critic) == doctest::Approx(0.75));
  }

  TEST_CASE("content loss examples") {
    const auto real = random_video({3, 8, 16, 16}, 6) * 0.5 - 0.5;
    CHECK(content_loss(FrameSequence(real), FrameSequence(real)) == 0.0);
    CHECK(content_loss(FrameSequence(real + 0.5), FrameSequence(real)) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK_THROWS_AS(content_loss(real, real.slice(1, 0, 4)), ShapeError);
  }

  TEST_CASE("content and motion losses match the brute-force sum") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto a = random_video({3, 4, 8, 8}, 10 + s), b = random_video({3, 4, 8, 8}, 20 + s);
      CHECK(content_loss(FrameSequence(a), FrameSequence(b)) ==
            doctest::Approx(oracle::l1_sum_over_time(a, b)).epsilon(1e-6));
      const auto u = random_video({2, 4, 8, 8}, 30 + s) * 3, w = random_video({2, 4, 8, 8}, 40 + s) * 3;
      CHECK(motion_loss(FlowSequence(u), FlowSequence(w)) == doctest::Approx(oracle::l1_sum_over_time(u, w)).epsilon(1e-6));
    }
  }

  TEST_CASE("motion loss: offset (0.25, 0) over T=4 is 0.5") {
    const auto real = random_video({2, 4, 8, 8}, 7);
    auto gen = real.clone();
    gen[0] += 0.25;
    CHECK(motion_loss(FlowSequence(gen), FlowSequence(real)) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(motion_loss(FlowSequence(real), FlowSequence(real)) == 0.0);
  }

  TEST_CASE("losses are non-negative and satisfy the triangle inequality") {
    const auto a = random_video({3, 2, 8, 8}, 1), b = random_video({3, 2, 8, 8}, 2), c = random_video({3, 2, 8, 8}, 3);
    const auto ab = content_loss(FrameSequence(a), FrameSequence(b));
    const auto bc = content_loss(FrameSequence(b), FrameSequence(c));
    const auto ac = content_loss(FrameSequence(a), FrameSequence(c));
    CHECK(ab > 0.0);
    CHECK(ac <= ab + bc + 1e-9);
  }

  TEST_CASE("batched losses average over the batch") {
    const auto a = random_video({2, 3, 2, 8, 8}, 4), b = random_video({2, 3, 2, 8, 8}, 5);
    const double expect = (oracle::l1_sum_over_time(a[0], b[0]) + oracle::l1_sum_over_time(a[1], b[1])) / 2;
    CHECK(content_loss(a, b).item<double>() == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("gradient penalty vanishes for a unit-norm linear critic and is 4 at norm 3") {
    auto rng = at::make_generator<at::CPUGeneratorImpl>(1);
    const auto real = random_video({3, 3, 4, 8, 8}, 8, torch::kFloat64);
    const auto gen = random_video({3, 3, 4, 8, 8}, 9, torch::kFloat64);
    const auto w1 = weight_with_norm({3, 4, 8, 8}, 1.0, 2);
    CHECK(std::abs(gradient_penalty(real, gen, linear_critic(w1), rng).item<double>()) < 1e-5);
    const auto w3 = weight_with_norm({3, 4, 8, 8}, 3.0, 3);
    CHECK(std::abs(gradient_penalty(real, gen, linear_critic(w3), rng).item<double>() - 4.0) < 1e-4);
  }

  TEST_CASE("gradient penalty matches a finite-difference gradient norm") {
    auto critic = make_critic(2, 8, 2, 4);
    critic->to(torch::kFloat64);
    CriticFn fn = [&](const torch::Tensor& v) { return critic->forward(v); };
    const auto real = random_video({1, 3, 2, 8, 8}, 10, torch::kFloat64);
    const auto gen = random_video({1, 3, 2, 8, 8}, 11, torch::kFloat64);
    const auto eps = torch::full({1}, 0.3, torch::kFloat64);
    auto rng = at::make_generator<at::CPUGeneratorImpl>(0);
    const double gp = gradient_penalty(real, gen, fn, rng, eps).item<double>();

    torch::NoGradGuard ng;
    auto x = (0.3 * real + 0.7 * gen).contiguous();
    auto flat = x.view({-1});
    const double h = 1e-6;
    double sq = 0.0;
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double plus = fn(x).item<double>();
      flat[i] = orig - h;
      const double minus = fn(x).item<double>();
      flat[i] = orig;
      const double d = (plus - minus) / (2 * h);
      sq += d * d;
    }
    const double fd_gp = (std::sqrt(sq) - 1.0) * (std::sqrt(sq) - 1.0);
    CHECK(std::abs(gp - fd_gp) / std::max(std::abs(fd_gp), 1e-12) < 1e-2);
  }

  TEST_CASE("gradient penalty needs a differentiable critic") {
    auto rng = at::make_generator<at::CPUGeneratorImpl>(1);
    const auto v = random_video({1, 3, 2, 8, 8}, 1);
    CriticFn detached = [](const torch::Tensor& x) { return x.detach().flatten(1).sum(1); };
    CHECK_THROWS_AS(gradient_penalty(v, v, detached, rng), Error);
    CHECK_THROWS_AS(gradient_penalty(v, v.slice(2, 0, 1), detached, rng), ShapeError);
  }

  TEST_CASE("critic loss examples") {
    auto rng = at::make_generator<at::CPUGeneratorImpl>(2);
    const auto real = random_video({2, 3, 2, 8, 8}, 12, torch::kFloat64);
    const auto gen = random_video({2, 3, 2, 8, 8}, 13, torch::kFloat64);
    CriticFn constant = [](const torch::Tensor& v) { return v.flatten(1).sum(1) * 0.0 + 2.5; };
    CHECK(critic_loss(real, gen, constant, 0.0, rng).loss.item<double>() == doctest::Approx(0.0));

    const auto w = weight_with_norm({3, 2, 8, 8}, 1.0, 5);
    const auto parts = critic_loss(real, gen, linear_critic(w), 10.0, rng);
    const double expect = (w * (gen.mean(0) - real.mean(0))).sum().item<double>();
    CHECK(parts.loss.item<double>() == doctest::Approx(expect).epsilon(1e-6));
    CHECK(std::abs(parts.gp.item<double>()) < 1e-5);
  }

  TEST_CASE("critic loss equals direct re-evaluation with the same draw") {
    auto critic = make_critic(2, 8, 2, 6);
    CriticFn fn = [&](const torch::Tensor& v) { return critic->forward(v); };
    const auto real = random_video({2, 3, 2, 8, 8}, 14), gen = random_video({2, 3, 2, 8, 8}, 15);
    auto rng = at::make_generator<at::CPUGeneratorImpl>(7);
    auto rng_copy = at::make_generator<at::CPUGeneratorImpl>(7);
    const double loss = critic_loss(real, gen, fn, 10.0, rng).loss.item<double>();
    const double gp = gradient_penalty(real, gen, fn, rng_copy).item<double>();
    const double direct = fn(gen).mean().item<double>() - fn(real).mean().item<double>() + 10.0 * gp;
    CHECK(loss == doctest::Approx(direct).epsilon(1e-6));
  }

  TEST_CASE("critic loss falls when generated scores fall") {
    auto rng = at::make_generator<at::CPUGeneratorImpl>(3);
    const auto real = random_video({1, 3, 2, 8, 8}, 16, torch::kFloat64);
    const auto gen = random_video({1, 3, 2, 8, 8}, 17, torch::kFloat64);
    const auto w = weight_with_norm({3, 2, 8, 8}, 1.0, 6);
    const double base = critic_loss(real, gen, linear_critic(w), 0.0, rng).loss.item<double>();
    const double lower = critic_loss(real, gen - 0.1 * w.unsqueeze(0), linear_critic(w), 0.0, rng).loss.item<double>();
    CHECK(lower < base);
  }

  TEST_CASE("generator adversarial loss") {
    const auto gen = random_video({2, 3, 2, 8, 8}, 18);
    CriticFn constant = [](const torch::Tensor& v) { return v.flatten(1).sum(1) * 0.0 + 1.25; };
    CHECK(generator_adv_loss(gen, constant).item<double>() == doctest::Approx(-1.25));

    auto critic = make_critic(2, 8, 2, 8);
    CriticFn fn = [&](const torch::Tensor& v) { return critic->forward(v); };
    torch::NoGradGuard ng;
    critic->head->bias.zero_();
    const double base = generator_adv_loss(gen, fn).item<double>();
    CHECK(base == doctest::Approx(-fn(gen).mean().item<double>()));
    critic->head->weight.mul_(2.0);
    CHECK(generator_adv_loss(gen, fn).item<double>() == doctest::Approx(2.0 * base).epsilon(1e-6));
  }

  TEST_CASE("total loss") {
    const LossWeights w;
    CHECK(total_loss(0.2, 0.3, 0.4, w).total == doctest::Approx(20.7).epsilon(1e-12));
    CHECK(total_loss(0.0, 0.0, 0.0, w).total == 0.0);
    CHECK(total_loss(0.2, 0.3, 0.4, LossWeights{0, 0, 1}).total == 0.4);
    const auto r = total_loss(1.5, 2.5, -0.5, w, 3.0, 0.1);
    CHECK(std::abs(r.total - (100 * r.content + r.motion + r.adversarial_g)) < 1e-6);
    CHECK(r.critic == 3.0);
    CHECK(r.gradient_penalty == 0.1);
    CHECK_THROWS_AS(total_loss(std::nan(""), 0, 0, w), TrainingDivergence);
    CHECK_THROWS_AS(total_loss(0, 0, 0, w, INFINITY), TrainingDivergence);
  }

  TEST_CASE("loss report log record") {
    const auto j = loss_report_json(7, total_loss(0.1, 0.2, 0.3, LossWeights{}, 0.4, 0.5));
    for (const char* k : {"step", "content", "motion", "adv_g", "critic", "gp", "total"}) CHECK(j.contains(k));
    CHECK(j["step"] == 7);
    CHECK(j["gp"] == 0.5);
  }
}
