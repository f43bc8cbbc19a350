#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zscr/model.hpp"

namespace zscr {

enum class WrongClassMode { Random, MostSimilar, KMeans };

/// Loss-term switches used for ablation studies. All off = full model.
struct Ablation {
  bool no_wrong_class = false;
  bool no_triplet = false;
  bool no_reg = false;
  bool no_gan = false;

  bool any() const { return no_wrong_class || no_triplet || no_reg || no_gan; }
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

/// Every hyperparameter of the training schedule.
struct TrainConfig {
  float alpha = 0.5f;    // divergence weight
  float beta = 2.0f;     // margin-regularizer weight
  float lambda = 2.0f;   // Manhattan margin
  float lr = 5e-5f;
  float clip_k = 0.01f;  // critic weight clip
  std::uint32_t n_outer = 30;
  std::uint32_t d_steps = 5;
  std::optional<std::uint32_t> inner_cap;
  std::uint32_t batch_size = 64;
  Dims dims;  // text_dim / image_dim are taken from the dataset
  DivergenceOptions divergence;
  float leaky_slope = 0.2f;
  std::uint64_t seed = 0;
  WrongClassMode wrong_class_mode = WrongClassMode::Random;
  Ablation ablation;
  bool joint_mode = false;
  float rms_rho = 0.9f;
  float rms_epsilon = 1e-8f;

  /// ConfigInvalid naming the offending key.
  void validate() const;

  /// Inner-loop length of outer iteration `it` (1-based).
  std::uint32_t inner_steps(std::uint32_t it) const { return inner_cap ? std::min(it, *inner_cap) : it; }
};

std::string_view to_string(WrongClassMode mode);
std::string_view to_string(DivergenceMode mode);

/// Ordered key/value view of a config; floats use shortest round-trip form.
std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& config);
std::string format_config(const TrainConfig& config);

/// Sets one key. Unknown keys and malformed values raise ConfigInvalid.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);

/// Applies `key=value` lines (blank lines and `#` comments ignored) on top of `base`.
TrainConfig parse_config_text(std::string_view text, TrainConfig base = {});

/// Splits "key=value"; ConfigInvalid when no '=' is present.
std::pair<std::string, std::string> split_assignment(std::string_view line);

/// Shortest decimal form that parses back to the same float.
std::string format_float(float v);

}  // namespace zscr
