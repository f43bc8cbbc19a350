#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "zscr/autodiff.hpp"
#include "zscr/tensor.hpp"

namespace zscr {

using Rng = std::mt19937_64;

/// Network dimensions. The hidden widths default to the published
/// architecture; tests shrink them to get hand-checkable toy networks.
struct Dims {
  std::size_t text_dim = 0;     // d_T
  std::size_t image_dim = 0;    // d_I
  std::size_t latent_dim = 1024;  // d_c, latent code and common space
  std::size_t noise_dim = 100;  // d_z
  std::size_t gen_hidden1 = 2048;
  std::size_t gen_hidden2 = 4096;
  std::size_t disc_hidden = 1024;

  void validate() const;
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// y = x W + b with W stored [in x out].
struct Affine {
  Tensor weight;
  Tensor bias;

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
};

struct TextEncoderParams {
  Affine layer;  // d_T -> 2 d_c (mu | log_sigma)
};

struct GeneratorParams {
  Affine hidden1;  // d_z + d_c -> gen_hidden1
  Affine hidden2;  // gen_hidden1 -> gen_hidden2
  Affine output;   // gen_hidden2 -> d_I
};

struct DiscriminatorParams {
  Affine hidden;  // d_I + d_T -> disc_hidden
  Affine output;  // disc_hidden -> 1
};

struct CsemParams {
  Affine layer;  // d_I -> d_c
};

struct ModelParams {
  Dims dims;
  float leaky_slope = 0.2f;
  TextEncoderParams text_encoder;
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  CsemParams csem;

  /// Stable names for serialization, e.g. "generator.hidden1.weight".
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

  /// Throws ShapeMismatch / NonFinite if layer shapes disagree with dims.
  void validate() const;
};

std::vector<Tensor*> tensors_of(TextEncoderParams& p);
std::vector<Tensor*> tensors_of(GeneratorParams& p);
std::vector<Tensor*> tensors_of(DiscriminatorParams& p);
std::vector<Tensor*> tensors_of(CsemParams& p);

inline constexpr float kInitStddev = 0.02f;

/// Every weight and bias drawn i.i.d. from Normal(0, 0.02).
ModelParams init_params(const Dims& dims, Rng& rng, float leaky_slope = 0.2f);

/// Diagonal Gaussian code; sigma = exp(log_sigma).
struct GaussianCode {
  Tensor mu;
  Tensor log_sigma;
};

enum class DivergenceMode { KlClosedForm, JsMonteCarlo };

struct DivergenceOptions {
  DivergenceMode mode = DivergenceMode::KlClosedForm;
  std::size_t mc_samples = 16;
};

// --- Tape-level forward passes (batched; rows are samples) -----------------

enum class Binding { Trainable, Frozen };

struct AffineVars {
  ad::Var weight;
  ad::Var bias;
};

struct TextEncoderVars {
  AffineVars layer;
};
struct GeneratorVars {
  AffineVars hidden1, hidden2, output;
};
struct DiscriminatorVars {
  AffineVars hidden, output;
};
struct CsemVars {
  AffineVars layer;
};

AffineVars bind(ad::Tape& tape, const Affine& layer, Binding binding);
TextEncoderVars bind(ad::Tape& tape, const TextEncoderParams& p, Binding binding);
GeneratorVars bind(ad::Tape& tape, const GeneratorParams& p, Binding binding);
DiscriminatorVars bind(ad::Tape& tape, const DiscriminatorParams& p, Binding binding);
CsemVars bind(ad::Tape& tape, const CsemParams& p, Binding binding);

/// Bound leaves in the same order as tensors_of() on the block.
std::vector<ad::Var> leaves(const TextEncoderVars& v);
std::vector<ad::Var> leaves(const GeneratorVars& v);
std::vector<ad::Var> leaves(const DiscriminatorVars& v);
std::vector<ad::Var> leaves(const CsemVars& v);

ad::Var affine(const AffineVars& layer, ad::Var x);

struct CodeVars {
  ad::Var mu;
  ad::Var log_sigma;
};

CodeVars text_encode(const TextEncoderVars& te, ad::Var phi, std::size_t latent_dim);
/// c = mu + exp(log_sigma) * eps, eps ~ N(0, I) drawn from rng.
ad::Var sample_latent(const CodeVars& code, Rng& rng);
/// Batch mean of the per-row divergence to N(0, I).
ad::Var latent_divergence(const CodeVars& code, const DivergenceOptions& options, Rng& rng);
ad::Var generate(const GeneratorVars& g, ad::Var z, ad::Var c_hat, float leaky_slope);
/// Unbounded critic score, [b x 1].
ad::Var discriminate(const DiscriminatorVars& d, ad::Var image, ad::Var phi, float leaky_slope);
ad::Var csem_map(const CsemVars& c, ad::Var embedding);

/// [rows x cols] matrix of i.i.d. N(0, 1) draws.
Tensor normal_matrix(std::size_t rows, std::size_t cols, Rng& rng);

// --- Single-sample convenience API ----------------------------------------

GaussianCode text_encode(const ModelParams& params, const Tensor& phi);
Tensor sample_latent(const GaussianCode& code, Rng& rng);
double latent_divergence(const GaussianCode& code, const DivergenceOptions& options, Rng& rng);
Tensor generate(const ModelParams& params, const Tensor& z, const Tensor& c_hat);
float discriminate(const ModelParams& params, const Tensor& image, const Tensor& phi);
Tensor csem_map(const ModelParams& params, const Tensor& embedding);

}  // namespace zscr
