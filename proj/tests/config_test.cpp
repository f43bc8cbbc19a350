#include <gtest/gtest.h>

#include <bit>
#include <cstdlib>
#include <functional>
#include <random>

#include "test_util.hpp"
#include "zscr/config.hpp"

namespace zscr {
namespace {

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigInvalid);
    return e.what();
  }
  ADD_FAILURE() << "no error";
  return {};
}

TEST(Config, DefaultsAreValid) {
  const TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_FLOAT_EQ(c.alpha, 0.5f);
  EXPECT_FLOAT_EQ(c.beta, 2.0f);
  EXPECT_FLOAT_EQ(c.lambda, 2.0f);
  EXPECT_FLOAT_EQ(c.lr, 5e-5f);
  EXPECT_FLOAT_EQ(c.clip_k, 0.01f);
  EXPECT_EQ(c.d_steps, 5u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_FALSE(c.inner_cap.has_value());
}

TEST(Config, ParsesKeysCommentsAndBlankLines) {
  const TrainConfig c = parse_config_text(
      "# header\n"
      "\n"
      "alpha = 0.25   # trailing comment\n"
      "  lr=1e-3\r\n"
      "n_outer=7\n"
      "inner_cap=3\n"
      "divergence=js\n"
      "js_samples=8\n"
      "wrong_class=kmeans\n"
      "ablate=no_reg, no_wrong_class\n"
      "seed=18446744073709551615\n");
  EXPECT_FLOAT_EQ(c.alpha, 0.25f);
  EXPECT_FLOAT_EQ(c.lr, 1e-3f);
  EXPECT_EQ(c.n_outer, 7u);
  EXPECT_EQ(c.inner_cap, 3u);
  EXPECT_EQ(c.divergence.mode, DivergenceMode::JsMonteCarlo);
  EXPECT_EQ(c.divergence.mc_samples, 8u);
  EXPECT_EQ(c.wrong_class_mode, WrongClassMode::KMeans);
  EXPECT_TRUE(c.ablation.no_reg);
  EXPECT_TRUE(c.ablation.no_wrong_class);
  EXPECT_FALSE(c.ablation.no_gan);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
}

TEST(Config, LaterLinesAndBaseValues) {
  TrainConfig base;
  base.beta = 9.0f;
  base.n_outer = 4;
  const TrainConfig c = parse_config_text("n_outer=5\nn_outer=6\n", base);
  EXPECT_EQ(c.n_outer, 6u);
  EXPECT_FLOAT_EQ(c.beta, 9.0f);
  TrainConfig d = c;
  set_config_value(d, "n_outer", "2");
  EXPECT_EQ(d.n_outer, 2u);
  EXPECT_EQ(parse_config_text("ablate=none\n", parse_config_text("ablate=no_gan\n")).ablation, Ablation{});
  EXPECT_FALSE(parse_config_text("inner_cap=none\n", c).inner_cap.has_value());
}

TEST(Config, UnknownKeyIsNamed) {
  const std::string msg = error_text([] { parse_config_text("alpha=1\nlearning_rate=0.1\n"); });
  EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
}

TEST(Config, MalformedValuesNameTheKey) {
  for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{{"alpha", "abc"},
                                                                                 {"lr", "1e-3x"},
                                                                                 {"lr", "inf"},
                                                                                 {"n_outer", "-1"},
                                                                                 {"n_outer", "2.5"},
                                                                                 {"batch_size", ""},
                                                                                 {"divergence", "wasserstein"},
                                                                                 {"wrong_class", "nearest"},
                                                                                 {"ablate", "no_gan,bogus"},
                                                                                 {"joint", "yes"}}) {
    TrainConfig c;
    const std::string msg = error_text([&] { set_config_value(c, key, value); });
    EXPECT_NE(msg.find(key), std::string::npos) << key << "=" << value << ": " << msg;
  }
}

TEST(Config, LineWithoutEqualsIsRejected) {
  EXPECT_ZSCR_ERROR(parse_config_text("alpha 0.5\n"), ErrorKind::ConfigInvalid);
  EXPECT_ZSCR_ERROR(split_assignment("novalue"), ErrorKind::ConfigInvalid);
  EXPECT_EQ(split_assignment(" a = b=c "), (std::pair<std::string, std::string>{"a", "b=c"}));
}

TEST(Config, ValidateNamesOffendingKey) {
  auto check = [](const std::string& key, auto mutate) {
    TrainConfig c;
    mutate(c);
    const std::string msg = error_text([&] { c.validate(); });
    EXPECT_NE(msg.find(key), std::string::npos) << msg;
  };
  check("alpha", [](TrainConfig& c) { c.alpha = 0.0f; });
  check("lambda", [](TrainConfig& c) { c.lambda = -1.0f; });
  check("lr", [](TrainConfig& c) { c.lr = 0.0f; });
  check("clip_k", [](TrainConfig& c) { c.clip_k = 0.0f; });
  check("n_outer", [](TrainConfig& c) { c.n_outer = 0; });
  check("d_steps", [](TrainConfig& c) { c.d_steps = 0; });
  check("inner_cap", [](TrainConfig& c) { c.inner_cap = 0; });
  check("batch_size", [](TrainConfig& c) { c.batch_size = 0; });
  check("leaky_slope", [](TrainConfig& c) { c.leaky_slope = 1.0f; });
  check("rms_rho", [](TrainConfig& c) { c.rms_rho = 1.0f; });
  check("latent_dim", [](TrainConfig& c) { c.dims.latent_dim = 0; });
  check("joint", [](TrainConfig& c) {
    c.joint_mode = true;
    c.ablation.no_gan = true;
  });
}

TEST(Config, FormatRoundTrips) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(1e-6f, 10.0f);
  for (int trial = 0; trial < 200; ++trial) {
    TrainConfig c;
    c.alpha = u(rng);
    c.beta = u(rng);
    c.lambda = u(rng);
    c.lr = u(rng) * 1e-3f;
    c.clip_k = u(rng);
    c.n_outer = static_cast<std::uint32_t>(rng() % 100 + 1);
    c.inner_cap = trial % 2 ? std::optional<std::uint32_t>(7) : std::nullopt;
    c.seed = rng();
    c.divergence.mode = trial % 3 ? DivergenceMode::KlClosedForm : DivergenceMode::JsMonteCarlo;
    c.wrong_class_mode = static_cast<WrongClassMode>(trial % 3);
    c.ablation.no_reg = trial % 4 == 1;
    c.ablation.no_triplet = trial % 5 == 2;
    const std::string text = format_config(c);
    const TrainConfig back = parse_config_text(text);
    EXPECT_EQ(format_config(back), text);
    EXPECT_EQ(back.alpha, c.alpha);
    EXPECT_EQ(back.lr, c.lr);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.inner_cap, c.inner_cap);
    EXPECT_EQ(back.ablation, c.ablation);
  }
}

TEST(Config, FormatFloatIsShortestRoundTrip) {
  EXPECT_EQ(format_float(0.5f), "0.5");
  EXPECT_EQ(format_float(5e-5f), "5e-05");
  std::mt19937 rng(2);
  for (int i = 0; i < 10000; ++i) {
    const float v = std::bit_cast<float>(static_cast<std::uint32_t>(rng() & 0x7f7fffffu));
    EXPECT_EQ(std::strtof(format_float(v).c_str(), nullptr), v) << format_float(v);
  }
}

}  // namespace
}  // namespace zscr
