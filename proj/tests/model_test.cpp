#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "zscr/autodiff.hpp"
#include "zscr/model.hpp"

namespace zscr {
namespace {

using testing::toy_dims;

ModelParams zero_params(const Dims& dims) {
  Rng rng(0);
  ModelParams p = init_params(dims, rng);
  for (auto& [name, t] : p.named_tensors()) std::fill(t->data().begin(), t->data().end(), 0.0f);
  return p;
}

TEST(InitParams, DeterministicAndShaped) {
  Rng r1(42), r2(42), r3(43);
  const ModelParams a = init_params(toy_dims(), r1);
  const ModelParams b = init_params(toy_dims(), r2);
  const ModelParams c = init_params(toy_dims(), r3);
  const auto na = a.named_tensors();
  const auto nb = b.named_tensors();
  const auto nc = c.named_tensors();
  ASSERT_EQ(na.size(), 14u);
  bool any_differs = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    EXPECT_TRUE(na[i].second->bitwise_equal(*nb[i].second)) << na[i].first;
    any_differs = any_differs || !na[i].second->bitwise_equal(*nc[i].second);
  }
  EXPECT_TRUE(any_differs);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.text_encoder.layer.weight.shape(), (Tensor::Shape{4, 10}));
  EXPECT_EQ(a.generator.hidden1.weight.shape(), (Tensor::Shape{8, 8}));
  EXPECT_EQ(a.discriminator.hidden.weight.shape(), (Tensor::Shape{10, 6}));
  EXPECT_EQ(a.discriminator.output.bias.shape(), (Tensor::Shape{1}));
  EXPECT_EQ(a.csem.layer.weight.shape(), (Tensor::Shape{6, 5}));
}

TEST(InitParams, MomentsOfTheWeights) {
  Dims d = toy_dims();
  d.gen_hidden1 = 400;
  d.gen_hidden2 = 400;  // 160000 weights in hidden2
  Rng rng(9);
  const ModelParams p = init_params(d, rng);
  const auto w = p.generator.hidden2.weight.data();
  double sum = 0.0, sq = 0.0;
  for (float v : w) sum += v;
  const double mean = sum / static_cast<double>(w.size());
  for (float v : w) sq += (v - mean) * (v - mean);
  const double std = std::sqrt(sq / static_cast<double>(w.size() - 1));
  EXPECT_NEAR(mean, 0.0, 3e-3);
  EXPECT_NEAR(std, 0.02, 1e-3);
}

TEST(InitParams, InvalidDims) {
  Rng rng(0);
  Dims d = toy_dims();
  d.latent_dim = 0;
  EXPECT_ZSCR_ERROR(init_params(d, rng), ErrorKind::ConfigInvalid);
}

TEST(ModelParams, ValidateCatchesBadShapes) {
  Rng rng(0);
  ModelParams p = init_params(toy_dims(), rng);
  p.csem.layer.bias = Tensor::zeros({7});
  EXPECT_ZSCR_ERROR(p.validate(), ErrorKind::ShapeMismatch);
  p = init_params(toy_dims(), rng);
  p.generator.output.weight[0] = std::nanf("");
  EXPECT_ZSCR_ERROR(p.validate(), ErrorKind::NonFinite);
}

TEST(TextEncode, ZeroParamsGiveStandardNormal) {
  const ModelParams p = zero_params(toy_dims());
  const GaussianCode c = text_encode(p, Tensor::vector({1, -2, 3, 0.5f}));
  ASSERT_EQ(c.mu.size(), 5u);
  ASSERT_EQ(c.log_sigma.size(), 5u);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(c.mu[j], 0.0f);
    EXPECT_EQ(std::exp(c.log_sigma[j]), 1.0f);
  }
}

TEST(TextEncode, HandComputedToy) {
  Dims d = toy_dims(2, 6);
  d.latent_dim = 1;
  ModelParams p = zero_params(d);
  // W is [d_T x 2 d_c] = [[1, 2], [3, 4]], b = [0.5, -1]
  p.text_encoder.layer.weight = Tensor::from_rows({{1, 2}, {3, 4}});
  p.text_encoder.layer.bias = Tensor::vector({0.5f, -1.0f});
  const GaussianCode c = text_encode(p, Tensor::vector({2, -1}));
  EXPECT_FLOAT_EQ(c.mu[0], 2 * 1 + -1 * 3 + 0.5f);
  EXPECT_FLOAT_EQ(c.log_sigma[0], 2 * 2 + -1 * 4 - 1.0f);
  EXPECT_ZSCR_ERROR(text_encode(p, Tensor::vector({1, 2, 3})), ErrorKind::ShapeMismatch);
}

TEST(SampleLatent, CollapsedVarianceReturnsMean) {
  GaussianCode c{Tensor::vector({0.3f, -1.5f}), Tensor::vector({-200.0f, -200.0f})};
  Rng rng(1);
  const Tensor s = sample_latent(c, rng);
  EXPECT_EQ(s[0], 0.3f);
  EXPECT_EQ(s[1], -1.5f);
}

TEST(SampleLatent, EmpiricalMean) {
  const float sigma = 0.7f;
  GaussianCode c{Tensor::vector({1.0f, -2.0f}), Tensor::vector({std::log(sigma), std::log(sigma)})};
  Rng rng(2);
  double m0 = 0.0, m1 = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Tensor s = sample_latent(c, rng);
    m0 += s[0];
    m1 += s[1];
  }
  EXPECT_NEAR(m0 / n, 1.0, 3 * sigma / 100);
  EXPECT_NEAR(m1 / n, -2.0, 3 * sigma / 100);
}

TEST(SampleLatent, Deterministic) {
  GaussianCode c{Tensor::vector({1.0f, -2.0f}), Tensor::vector({0.1f, -0.3f})};
  Rng a(5), b(5);
  EXPECT_TRUE(sample_latent(c, a).bitwise_equal(sample_latent(c, b)));
}

TEST(SampleLatent, GradCheckOfSquaredNorm) {
  const Tensor mu = Tensor::from_rows({{0.4f, -1.2f, 0.7f}});
  const Tensor ls = Tensor::from_rows({{-0.3f, 0.2f, 0.5f}});
  const auto r = ad::grad_check(
      [](ad::Tape& t, std::span<const ad::Var> p) {
        Rng rng(17);
        const ad::Var c = sample_latent(CodeVars{p[0], p[1]}, rng);
        return ad::mean(c * c);
      },
      {mu, ls});
  EXPECT_LT(r.max_rel_error, 1e-2);
}

TEST(Divergence, KlExamples) {
  Rng rng(0);
  const DivergenceOptions kl;
  EXPECT_EQ(latent_divergence({Tensor::vector({0, 0}), Tensor::vector({0, 0})}, kl, rng), 0.0);
  EXPECT_NEAR(latent_divergence({Tensor::vector({1, 0}), Tensor::vector({0, 0})}, kl, rng), 0.5, 1e-7);
  // KL(N(mu, s^2) || N(0,1)) = 0.5 (s^2 + mu^2 - 1 - log s^2)
  const double s = 1.7, m = -0.4;
  EXPECT_NEAR(latent_divergence({Tensor::vector({float(m)}), Tensor::vector({float(std::log(s))})}, kl, rng),
              0.5 * (s * s + m * m - 1 - std::log(s * s)), 1e-6);
}

TEST(Divergence, KlNonNegativeAndZeroOnlyAtStandardNormal) {
  Rng rng(4);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  const DivergenceOptions kl;
  for (int i = 0; i < 1000; ++i) {
    GaussianCode c{Tensor::vector({u(rng), u(rng), u(rng)}), Tensor::vector({u(rng), u(rng), u(rng)})};
    EXPECT_GT(latent_divergence(c, kl, rng), 1e-6);
  }
}

TEST(Divergence, JsMonteCarlo) {
  DivergenceOptions js;
  js.mode = DivergenceMode::JsMonteCarlo;
  js.mc_samples = 2000;
  Rng rng(3);
  EXPECT_NEAR(latent_divergence({Tensor::vector({0, 0}), Tensor::vector({0, 0})}, js, rng), 0.0, 5e-2);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  js.mc_samples = 200;
  for (int i = 0; i < 50; ++i) {
    GaussianCode c{Tensor::vector({u(rng), u(rng)}), Tensor::vector({u(rng) / 2, u(rng) / 2})};
    const double v = latent_divergence(c, js, rng);
    EXPECT_GE(v, -5e-2);
    EXPECT_LE(v, std::numbers::ln2 + 5e-2);
  }
  // far-apart distributions saturate near log 2
  js.mc_samples = 500;
  EXPECT_NEAR(latent_divergence({Tensor::vector({40, 0}), Tensor::vector({0, 0})}, js, rng), std::numbers::ln2,
              1e-3);
}

TEST(Generate, NonNegativeAndShaped) {
  Rng rng(6);
  const ModelParams p = init_params(toy_dims(), rng);
  for (int i = 0; i < 50; ++i) {
    const Tensor out = generate(p, normal_matrix(1, 3, rng), normal_matrix(1, 5, rng));
    ASSERT_EQ(out.size(), 6u);
    for (float v : out.data()) EXPECT_GE(v, 0.0f);
  }
  EXPECT_ZSCR_ERROR(generate(p, Tensor::vector({1, 2}), Tensor::vector({1, 2, 3, 4, 5})), ErrorKind::ShapeMismatch);
}

TEST(Generate, ZeroParamsGiveZeros) {
  const ModelParams p = zero_params(toy_dims());
  const Tensor out = generate(p, Tensor::vector({1, 2, 3}), Tensor::vector({1, 1, 1, 1, 1}));
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Generate, HandComputedToy) {
  Dims d{.text_dim = 1, .image_dim = 2, .latent_dim = 2, .noise_dim = 2, .gen_hidden1 = 3, .gen_hidden2 = 3,
         .disc_hidden = 2};
  ModelParams p = zero_params(d);
  p.generator.hidden1.weight = Tensor::from_rows({{1, 0, -1}, {0, 1, 0}, {2, 0, 0}, {0, -1, 1}});
  p.generator.hidden1.bias = Tensor::vector({0, 0.5f, 0});
  p.generator.hidden2.weight = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {1, 1, -1}});
  p.generator.hidden2.bias = Tensor::vector({0, 0, 0});
  p.generator.output.weight = Tensor::from_rows({{1, -1}, {1, 0}, {0, 1}});
  p.generator.output.bias = Tensor::vector({0, 0.1f});
  // x = [z | c] = [1, -1, 0.5, 2]
  // h1 pre = [1*1 + 0.5*2, -1 + 0.5 - 2, -1 + 2] = [2, -2.5, 1] -> leaky [2, -0.5, 1]
  // h2 pre = [2 + 1, -0.5 + 1, -1] = [3, 0.5, -1] -> leaky [3, 0.5, -0.2]
  // out pre = [3 + 0.5, -3 - 0.2 + 0.1] = [3.5, -3.1] -> relu [3.5, 0]
  const Tensor out = generate(p, Tensor::vector({1, -1}), Tensor::vector({0.5f, 2}));
  EXPECT_FLOAT_EQ(out[0], 3.5f);
  EXPECT_FLOAT_EQ(out[1], 0.0f);
}

TEST(Discriminate, ZeroParamsAndHandComputedToy) {
  Dims d{.text_dim = 1, .image_dim = 2, .latent_dim = 2, .noise_dim = 2, .gen_hidden1 = 3, .gen_hidden2 = 3,
         .disc_hidden = 2};
  ModelParams p = zero_params(d);
  EXPECT_EQ(discriminate(p, Tensor::vector({1, 2}), Tensor::vector({3})), 0.0f);
  p.discriminator.hidden.weight = Tensor::from_rows({{1, 0}, {0, 1}, {-1, 1}});
  p.discriminator.hidden.bias = Tensor::vector({0, -1});
  p.discriminator.output.weight = Tensor::from_rows({{2}, {-3}});
  p.discriminator.output.bias = Tensor::vector({0.25f});
  // [img | phi] = [1, 2, 3]: pre = [1 - 3, 2 + 3 - 1] = [-2, 4] -> leaky [-0.4, 4]
  // score = 2 * -0.4 - 3 * 4 + 0.25 = -12.55
  EXPECT_FLOAT_EQ(discriminate(p, Tensor::vector({1, 2}), Tensor::vector({3})), -12.55f);
}

TEST(CsemMap, ZeroAndIdentityWeights) {
  Dims d = toy_dims(2, 2);
  d.latent_dim = 2;
  ModelParams p = zero_params(d);
  const Tensor zero = csem_map(p, Tensor::vector({1, -1}));
  ASSERT_EQ(zero.size(), 2u);
  EXPECT_EQ(zero[0], 0.0f);
  EXPECT_EQ(zero[1], 0.0f);
  p.csem.layer.weight = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor id = csem_map(p, Tensor::vector({0.7f, -1.3f}));
  EXPECT_EQ(id[0], 0.7f);
  EXPECT_EQ(id[1], 0.0f);
}

TEST(CsemMap, NonNegativeOutput) {
  Rng rng(12);
  const ModelParams p = init_params(toy_dims(), rng);
  for (int i = 0; i < 50; ++i) {
    const Tensor out = csem_map(p, normal_matrix(1, 6, rng));
    ASSERT_EQ(out.size(), 5u);
    for (float v : out.data()) EXPECT_GE(v, 0.0f);
  }
}

TEST(Forward, DeterministicGivenInputs) {
  Rng rng(13);
  const ModelParams p = init_params(toy_dims(), rng);
  const Tensor z = normal_matrix(1, 3, rng);
  const Tensor c = normal_matrix(1, 5, rng);
  EXPECT_TRUE(generate(p, z, c).bitwise_equal(generate(p, z, c)));
}

}  // namespace
}  // namespace zscr
