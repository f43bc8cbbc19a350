#include "zscr/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "zscr/error.hpp"

namespace zscr {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw Error(ErrorKind::ConfigInvalid,
              "key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " + std::string(expected));
}

float parse_float(std::string_view key, std::string_view value) {
  float out = 0.0f;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    bad_value(key, value, "a finite real");
  }
  return out;
}

template <typename T>
T parse_uint(std::string_view key, std::string_view value) {
  T out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an unsigned integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

Ablation parse_ablation(std::string_view key, std::string_view value) {
  Ablation a;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto token = trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (token == "no_wrong_class") {
      a.no_wrong_class = true;
    } else if (token == "no_triplet") {
      a.no_triplet = true;
    } else if (token == "no_reg") {
      a.no_reg = true;
    } else if (token == "no_gan") {
      a.no_gan = true;
    } else if (token != "none" && !token.empty()) {
      bad_value(key, token, "an ablation flag (no_wrong_class, no_triplet, no_reg, no_gan)");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return a;
}

std::string format_ablation(const Ablation& a) {
  std::string out;
  auto append = [&out](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  append(a.no_wrong_class, "no_wrong_class");
  append(a.no_triplet, "no_triplet");
  append(a.no_reg, "no_reg");
  append(a.no_gan, "no_gan");
  return out.empty() ? "none" : out;
}

}  // namespace

std::string format_float(float v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string_view to_string(WrongClassMode mode) {
  switch (mode) {
    case WrongClassMode::Random: return "random";
    case WrongClassMode::MostSimilar: return "most_similar";
    case WrongClassMode::KMeans: return "kmeans";
  }
  return "?";
}

std::string_view to_string(DivergenceMode mode) {
  return mode == DivergenceMode::KlClosedForm ? "kl" : "js";
}

void TrainConfig::validate() const {
  auto positive = [](const char* key, float v) {
    if (!(v > 0.0f)) throw Error(ErrorKind::ConfigInvalid, std::string("key '") + key + "' must be > 0");
  };
  positive("alpha", alpha);
  positive("beta", beta);
  positive("lambda", lambda);
  positive("lr", lr);
  positive("clip_k", clip_k);
  positive("rms_epsilon", rms_epsilon);
  if (n_outer < 1) throw Error(ErrorKind::ConfigInvalid, "key 'n_outer' must be >= 1");
  if (d_steps < 1) throw Error(ErrorKind::ConfigInvalid, "key 'd_steps' must be >= 1");
  if (inner_cap && *inner_cap < 1) throw Error(ErrorKind::ConfigInvalid, "key 'inner_cap' must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::ConfigInvalid, "key 'batch_size' must be >= 1");
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f)) {
    throw Error(ErrorKind::ConfigInvalid, "key 'leaky_slope' must lie in (0, 1)");
  }
  if (!(rms_rho >= 0.0f && rms_rho < 1.0f)) throw Error(ErrorKind::ConfigInvalid, "key 'rms_rho' must lie in [0, 1)");
  if (divergence.mode == DivergenceMode::JsMonteCarlo && divergence.mc_samples < 1) {
    throw Error(ErrorKind::ConfigInvalid, "key 'js_samples' must be >= 1");
  }
  const std::pair<const char*, std::size_t> widths[] = {
      {"latent_dim", dims.latent_dim},   {"noise_dim", dims.noise_dim},     {"gen_hidden1", dims.gen_hidden1},
      {"gen_hidden2", dims.gen_hidden2}, {"disc_hidden", dims.disc_hidden},
  };
  for (const auto& [key, v] : widths) {
    if (v == 0) throw Error(ErrorKind::ConfigInvalid, std::string("key '") + key + "' must be >= 1");
  }
  if (joint_mode && ablation.no_gan) {
    throw Error(ErrorKind::ConfigInvalid, "key 'joint' cannot be combined with ablation no_gan");
  }
}

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
  return {
      {"alpha", format_float(c.alpha)},
      {"beta", format_float(c.beta)},
      {"lambda", format_float(c.lambda)},
      {"lr", format_float(c.lr)},
      {"clip_k", format_float(c.clip_k)},
      {"n_outer", std::to_string(c.n_outer)},
      {"d_steps", std::to_string(c.d_steps)},
      {"inner_cap", c.inner_cap ? std::to_string(*c.inner_cap) : "none"},
      {"batch_size", std::to_string(c.batch_size)},
      {"latent_dim", std::to_string(c.dims.latent_dim)},
      {"noise_dim", std::to_string(c.dims.noise_dim)},
      {"gen_hidden1", std::to_string(c.dims.gen_hidden1)},
      {"gen_hidden2", std::to_string(c.dims.gen_hidden2)},
      {"disc_hidden", std::to_string(c.dims.disc_hidden)},
      {"divergence", std::string(to_string(c.divergence.mode))},
      {"js_samples", std::to_string(c.divergence.mc_samples)},
      {"leaky_slope", format_float(c.leaky_slope)},
      {"seed", std::to_string(c.seed)},
      {"wrong_class", std::string(to_string(c.wrong_class_mode))},
      {"ablate", format_ablation(c.ablation)},
      {"joint", c.joint_mode ? "true" : "false"},
      {"rms_rho", format_float(c.rms_rho)},
      {"rms_epsilon", format_float(c.rms_epsilon)},
  };
}

std::string format_config(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& [k, v] : to_key_values(config)) out << k << '=' << v << '\n';
  return out.str();
}

void set_config_value(TrainConfig& c, std::string_view raw_key, std::string_view raw_value) {
  const std::string_view key = trim(raw_key);
  const std::string_view value = trim(raw_value);
  if (key == "alpha") {
    c.alpha = parse_float(key, value);
  } else if (key == "beta") {
    c.beta = parse_float(key, value);
  } else if (key == "lambda") {
    c.lambda = parse_float(key, value);
  } else if (key == "lr") {
    c.lr = parse_float(key, value);
  } else if (key == "clip_k") {
    c.clip_k = parse_float(key, value);
  } else if (key == "n_outer") {
    c.n_outer = parse_uint<std::uint32_t>(key, value);
  } else if (key == "d_steps") {
    c.d_steps = parse_uint<std::uint32_t>(key, value);
  } else if (key == "inner_cap") {
    if (value == "none") {
      c.inner_cap.reset();
    } else {
      c.inner_cap = parse_uint<std::uint32_t>(key, value);
    }
  } else if (key == "batch_size") {
    c.batch_size = parse_uint<std::uint32_t>(key, value);
  } else if (key == "latent_dim") {
    c.dims.latent_dim = parse_uint<std::size_t>(key, value);
  } else if (key == "noise_dim") {
    c.dims.noise_dim = parse_uint<std::size_t>(key, value);
  } else if (key == "gen_hidden1") {
    c.dims.gen_hidden1 = parse_uint<std::size_t>(key, value);
  } else if (key == "gen_hidden2") {
    c.dims.gen_hidden2 = parse_uint<std::size_t>(key, value);
  } else if (key == "disc_hidden") {
    c.dims.disc_hidden = parse_uint<std::size_t>(key, value);
  } else if (key == "divergence") {
    if (value == "kl") {
      c.divergence.mode = DivergenceMode::KlClosedForm;
    } else if (value == "js") {
      c.divergence.mode = DivergenceMode::JsMonteCarlo;
    } else {
      bad_value(key, value, "'kl' or 'js'");
    }
  } else if (key == "js_samples") {
    c.divergence.mc_samples = parse_uint<std::size_t>(key, value);
  } else if (key == "leaky_slope") {
    c.leaky_slope = parse_float(key, value);
  } else if (key == "seed") {
    c.seed = parse_uint<std::uint64_t>(key, value);
  } else if (key == "wrong_class") {
    if (value == "random") {
      c.wrong_class_mode = WrongClassMode::Random;
    } else if (value == "most_similar") {
      c.wrong_class_mode = WrongClassMode::MostSimilar;
    } else if (value == "kmeans") {
      c.wrong_class_mode = WrongClassMode::KMeans;
    } else {
      bad_value(key, value, "'random', 'most_similar' or 'kmeans'");
    }
  } else if (key == "ablate") {
    c.ablation = parse_ablation(key, value);
  } else if (key == "joint") {
    c.joint_mode = parse_bool(key, value);
  } else if (key == "rms_rho") {
    c.rms_rho = parse_float(key, value);
  } else if (key == "rms_epsilon") {
    c.rms_epsilon = parse_float(key, value);
  } else {
    throw Error(ErrorKind::ConfigInvalid, "unknown config key '" + std::string(key) + "'");
  }
}

std::pair<std::string, std::string> split_assignment(std::string_view line) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorKind::ConfigInvalid, "expected key=value, got '" + std::string(line) + "'");
  }
  return {std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
}

TrainConfig parse_config_text(std::string_view text, TrainConfig base) {
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto [key, value] = split_assignment(line);
    set_config_value(base, key, value);
  }
  return base;
}

}  // namespace zscr
