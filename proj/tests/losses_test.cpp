#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "zscr/losses.hpp"

namespace zscr {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_matrix;
using testing::toy_dims;

Batch random_batch(const Dims& d, std::size_t rows, std::mt19937_64& rng) {
  Batch b;
  b.real_images = random_matrix(rows, d.image_dim, rng, 0.0f, 1.0f);
  b.wrong_images = random_matrix(rows, d.image_dim, rng, 0.0f, 1.0f);
  b.real_texts = random_matrix(rows, d.text_dim, rng);
  b.wrong_texts = random_matrix(rows, d.text_dim, rng);
  b.labels.assign(rows, 0);
  b.wrong_labels.assign(rows, 1);
  return b;
}

TEST(Triplet, Values) {
  EXPECT_NEAR(triplet_value(0.3, 0.3), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(triplet_value(0.9, 0.1), 0.3711, 1e-4);
  EXPECT_NEAR(triplet_value(0.9, 0.1), std::log1p(std::exp(-0.8)), 1e-12);
  double prev = triplet_value(0.0, 0.0);
  for (double gap = 1.0; gap < 60.0; gap += 1.0) {
    const double v = triplet_value(gap, 0.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-20);
}

TEST(Triplet, EqualScoresGiveLog2OnTheTape) {
  // Same embedding for positive and negative, so v_p == v_n exactly.
  Rng rng(1);
  const ModelParams p = init_params(toy_dims(), rng);
  Tape t;
  const CsemVars c = bind(t, p.csem, Binding::Frozen);
  const Var i = t.constant(Tensor::from_rows({{0.5f, 0.1f, 0.9f, 0.3f, 0.2f, 0.7f}}));
  const Var anchor = t.constant(Tensor::from_rows({{0.2f, 0.4f, 0.1f, 0.3f, 0.5f}}));
  const TripletTerms terms = triplet_loss(c, i, i, anchor);
  EXPECT_NEAR(terms.loss.item(), std::numbers::ln2, 1e-6);
}

TEST(Triplet, MonotoneInScores) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double vp = u(rng), vn = u(rng), h = 1e-3;
    EXPECT_LT(triplet_value(vp + h, vn), triplet_value(vp, vn));
    EXPECT_GT(triplet_value(vp, vn + h), triplet_value(vp, vn));
    EXPECT_GE(triplet_value(vp, vn), 0.0);
  }
}

TEST(Margin, Examples) {
  // d_p = 1, |I_w - i| = 3, lambda = 2 -> 0
  const Tensor i = Tensor::vector({0, 0});
  const Tensor real = Tensor::vector({1, 0});
  const Tensor wrong = Tensor::vector({1, 2});
  const MarginValue m = margin_regularizer(i.data(), real.data(), wrong.data(), 2.0f);
  EXPECT_EQ(m.d_p, 1.0);
  EXPECT_EQ(m.d_n, 1.0);
  EXPECT_EQ(m.reg, 0.0);
  // i = I_r and |I_w - i| = lambda
  const Tensor w2 = Tensor::vector({2, 1});
  EXPECT_EQ(margin_regularizer(real.data(), real.data(), w2.data(), 2.0f).reg, 0.0);
  // collapse onto the wrong embedding is penalized
  const MarginValue c = margin_regularizer(wrong.data(), real.data(), wrong.data(), 2.0f);
  EXPECT_EQ(c.reg, 2.0 + 2.0);
  EXPECT_GT(c.reg, 0.0);
  const Tensor short_vec = Tensor::vector({1});
  EXPECT_ZSCR_ERROR(margin_regularizer(short_vec.data(), real.data(), wrong.data(), 2.0f), ErrorKind::ShapeMismatch);
}

TEST(Margin, IdentityOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> lam(0.0f, 4.0f);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 40;
    const Tensor i = random_matrix(1, n, rng, 0.0f, 2.0f);
    const Tensor r = random_matrix(1, n, rng, 0.0f, 2.0f);
    const Tensor w = random_matrix(1, n, rng, 0.0f, 2.0f);
    const float lambda = lam(rng);
    double dp = 0.0, dw = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dp += std::fabs(double(r[j]) - double(i[j]));
      dw += std::fabs(double(w[j]) - double(i[j]));
    }
    const double want = dp - dw + lambda;
    const MarginValue m = margin_regularizer(i.data(), r.data(), w.data(), lambda);
    EXPECT_NEAR(m.reg, want, 1e-6);
    EXPECT_GE(m.d_p, 0.0);
    EXPECT_GE(m.d_n, -lambda);

    Tape t;
    const MarginTerms terms = margin_regularizer(t.constant(i), t.constant(r), t.constant(w), lambda);
    EXPECT_NEAR(terms.reg.item(), want, 1e-6 * std::max(1.0, std::fabs(want)) * 4);
  }
}

TEST(Margin, PositiveOnlyKeepsDistanceToReal) {
  Tape t;
  const Var i = t.constant(Tensor::from_rows({{0, 0}, {1, 1}}));
  const Var r = t.constant(Tensor::from_rows({{1, 2}, {1, 1}}));
  const MarginTerms m = margin_regularizer_positive_only(i, r);
  EXPECT_FLOAT_EQ(m.reg.item(), 1.5f);
}

TEST(Critic, HandExample) {
  Tape t;
  const Var fake = t.constant(Tensor::from_rows({{0.2f}}));
  const Var real = t.constant(Tensor::from_rows({{1.0f}}));
  const Var wrong = t.constant(Tensor::from_rows({{0.4f}}));
  const float value = critic_objective(fake, real, &wrong).item();
  EXPECT_EQ(value, 0.5f * (0.2f - 1.0f) + 0.5f * (0.4f - 1.0f));
  EXPECT_FLOAT_EQ(value, -0.7f);
}

TEST(Critic, ConstantCriticGivesZero) {
  Tape t;
  const Var s = t.constant(Tensor::filled({4, 1}, 0.37f));
  EXPECT_EQ(critic_objective(s, s, &s).item(), 0.0f);
  EXPECT_EQ(critic_objective(s, s, nullptr).item(), 0.0f);
}

TEST(Critic, WithoutWrongClassIsPlainWasserstein) {
  Tape t;
  const Var fake = t.constant(Tensor::from_rows({{0.2f}, {0.6f}}));
  const Var real = t.constant(Tensor::from_rows({{1.0f}, {0.0f}}));
  EXPECT_FLOAT_EQ(critic_objective(fake, real, nullptr).item(), 0.4f - 0.5f);
}

TEST(Critic, DecreasesAsRealScoreGrows) {
  Tape t;
  const Var fake = t.constant(Tensor::from_rows({{0.2f}}));
  const Var wrong = t.constant(Tensor::from_rows({{0.4f}}));
  float prev = 0.0f;
  for (float r = 0.0f; r < 100.0f; r += 10.0f) {
    const float v = critic_objective(fake, t.constant(Tensor::from_rows({{r}})), &wrong).item();
    if (r > 0.0f) EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Generator, HandComposition) {
  Tape t;
  const Var adv = t.constant(Tensor::scalar(-0.2f));
  const Var zero = t.constant(Tensor::scalar(0.0f));
  EXPECT_FLOAT_EQ(compose_generator_loss(adv, zero, zero, zero, 0.5f, 2.0f).item(), -0.2f);
}

TEST(Generator, CompositionIdentityOnRandomBatches) {
  std::mt19937_64 data_rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(trial);
    const ModelParams p = init_params(toy_dims(), rng);
    const Batch b = random_batch(p.dims, 5, data_rng);
    LossOptions o;
    o.alpha = 0.3f + 0.1f * trial;
    o.beta = 1.5f;
    Tape t;
    const GeneratorLoss g = generator_loss(t, p, b, o, rng);
    LossBreakdown bd;
    fill_breakdown(g, bd);
    EXPECT_NEAR(bd.l_g_total, bd.l_g_adv + o.alpha * (bd.div_r + bd.div_w) + o.beta * bd.reg, 1e-6);
    EXPECT_NEAR(bd.reg, bd.d_p - bd.d_n, 1e-5);
  }
}

TEST(Generator, RegularizersOffLeavesAdversarialTerm) {
  std::mt19937_64 data_rng(5);
  Rng rng(5);
  const ModelParams p = init_params(toy_dims(), rng);
  const Batch b = random_batch(p.dims, 4, data_rng);
  LossOptions o;
  o.alpha = 0.0f;
  o.beta = 0.0f;
  Tape t;
  const GeneratorLoss g = generator_loss(t, p, b, o, rng);
  EXPECT_EQ(g.total.item(), g.adv.item());

  // adv is minus the mean critic score of G(z, c_tr)
  const Tensor& rep = g.representative.value();
  double mean_score = 0.0;
  for (std::size_t r = 0; r < rep.rows(); ++r) {
    const Tensor row = Tensor::vector(std::vector<float>(rep.row(r).begin(), rep.row(r).end()));
    const Tensor phi = Tensor::vector(std::vector<float>(b.real_texts.row(r).begin(), b.real_texts.row(r).end()));
    mean_score += discriminate(p, row, phi);
  }
  EXPECT_NEAR(g.adv.item(), -mean_score / rep.rows(), 1e-6);
}

TEST(Generator, NoWrongClassDropsWrongTerms) {
  std::mt19937_64 data_rng(6);
  Rng rng(6);
  const ModelParams p = init_params(toy_dims(), rng);
  const Batch b = random_batch(p.dims, 4, data_rng);
  LossOptions o;
  o.use_wrong_class = false;
  Tape t;
  const GeneratorLoss g = generator_loss(t, p, b, o, rng);
  LossBreakdown bd;
  fill_breakdown(g, bd);
  EXPECT_EQ(bd.div_w, 0.0);
  EXPECT_NEAR(bd.reg, bd.d_p, 1e-6);
}

TEST(Clip, BoundsAndIdempotence) {
  Rng rng(7);
  ModelParams p = init_params(toy_dims(), rng);
  p.discriminator.hidden.weight[0] = 0.5f;
  p.discriminator.output.bias[0] = -3.0f;
  clip_weights(p.discriminator, 0.01f);
  EXPECT_EQ(p.discriminator.hidden.weight[0], 0.01f);
  EXPECT_EQ(p.discriminator.output.bias[0], -0.01f);
  for (Tensor* t : tensors_of(p.discriminator)) {
    for (float v : t->data()) EXPECT_LE(std::fabs(v), 0.01f);
  }
  const DiscriminatorParams before = p.discriminator;
  clip_weights(p.discriminator, 0.01f);
  EXPECT_TRUE(before.hidden.weight.bitwise_equal(p.discriminator.hidden.weight));
  EXPECT_TRUE(before.output.weight.bitwise_equal(p.discriminator.output.weight));

  // already inside the bound: untouched
  ModelParams q = init_params(toy_dims(), rng);
  const DiscriminatorParams inside = q.discriminator;
  clip_weights(q.discriminator, 10.0f);
  EXPECT_TRUE(inside.hidden.weight.bitwise_equal(q.discriminator.hidden.weight));
  EXPECT_TRUE(inside.output.bias.bitwise_equal(q.discriminator.output.bias));
}

TEST(DiscriminatorLoss, MatchesPerRowForwardPasses) {
  std::mt19937_64 data_rng(8);
  Rng rng(8);
  const ModelParams p = init_params(toy_dims(), rng);
  const std::size_t n = 3;
  const Batch b = random_batch(p.dims, n, data_rng);
  Rng r1(99);
  Tape t;
  const CriticLoss c = discriminator_loss(t, p, b, LossOptions{}, r1);

  // Replay the draws in order: z for the batch, then the latent noise.
  Rng r2(99);
  const Tensor z = normal_matrix(n, p.dims.noise_dim, r2);
  const Tensor eps = normal_matrix(n, p.dims.latent_dim, r2);
  auto row = [](const Tensor& m, std::size_t i) {
    return Tensor::vector(std::vector<float>(m.row(i).begin(), m.row(i).end()));
  };
  double fake = 0, real = 0, wrong = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const Tensor phi = row(b.real_texts, r);
    const GaussianCode code = text_encode(p, phi);
    Tensor c_hat = code.mu;
    for (std::size_t j = 0; j < c_hat.size(); ++j) c_hat[j] += std::exp(code.log_sigma[j]) * eps.at(r, j);
    fake += discriminate(p, generate(p, row(z, r), c_hat), phi);
    real += discriminate(p, row(b.real_images, r), phi);
    wrong += discriminate(p, row(b.wrong_images, r), phi);
  }
  fake /= n;
  real /= n;
  wrong /= n;
  EXPECT_NEAR(c.loss.item(), 0.5 * (fake - real) + 0.5 * (wrong - real), 1e-6);
}

}  // namespace
}  // namespace zscr
