#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zscr/autodiff.hpp"
#include "zscr/dataset.hpp"
#include "zscr/model.hpp"

namespace zscr {

/// One training minibatch drawn from the seen classes. Row j pairs an item of
/// class labels[j] with an item of a different class wrong_labels[j].
struct Batch {
  Tensor real_images;   // I_r   [b x d_I]
  Tensor real_texts;    // phi_tr [b x d_T]
  std::vector<ClassId> labels;
  Tensor wrong_images;  // I_w   [b x d_I]
  Tensor wrong_texts;   // phi_tw [b x d_T]
  std::vector<ClassId> wrong_labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Scalar values of every term of one generator/critic evaluation.
struct LossBreakdown {
  double v_p = 0.0;
  double v_n = 0.0;
  double d_p = 0.0;
  double d_n = 0.0;
  double l_t = 0.0;
  double l_d = 0.0;
  double l_g_adv = 0.0;
  double div_r = 0.0;
  double div_w = 0.0;
  double reg = 0.0;
  double l_g_total = 0.0;
};

struct LossOptions {
  float alpha = 0.5f;
  float beta = 2.0f;
  float lambda = 2.0f;
  DivergenceOptions divergence;
  /// Off: the critic loses its wrong-class bracket, the regularizer keeps
  /// only d_p, the wrong-text divergence is dropped and the triplet loss
  /// keeps only its positive term.
  bool use_wrong_class = true;
  bool use_reg = true;
};

// --- Triplet loss ---------------------------------------------------------

struct TripletTerms {
  ad::Var loss;  // mean softplus(v_n - v_p)
  ad::Var v_p;   // [b]
  ad::Var v_n;   // [b]; unset when no negative is supplied
};

/// v_p = cos(CSEM(i), c_tr), v_n = cos(CSEM(i_wrong), c_tr),
/// loss = mean log(1 + e^{v_n - v_p}).
TripletTerms triplet_loss(const CsemVars& csem, ad::Var i, ad::Var i_wrong, ad::Var c_hat_tr);
/// Positive-only form used when wrong classes are ablated: mean softplus(-v_p).
TripletTerms triplet_loss_positive_only(const CsemVars& csem, ad::Var i, ad::Var c_hat_tr);

/// log(1 + e^{v_n - v_p}).
double triplet_value(double v_p, double v_n);

// --- Margin regularizer ---------------------------------------------------

struct MarginTerms {
  ad::Var reg;  // batch mean of d_p - d_n
  ad::Var d_p;  // [b] |I_r - i|_1
  ad::Var d_n;  // [b] |I_w - i|_1 - lambda
};

/// reg = |I_r - i|_1 - |I_w - i|_1 + lambda, averaged over rows.
MarginTerms margin_regularizer(ad::Var i, ad::Var real, ad::Var wrong, float lambda);
/// d_p only, for the no-wrong-class ablation.
MarginTerms margin_regularizer_positive_only(ad::Var i, ad::Var real);

struct MarginValue {
  double reg = 0.0;
  double d_p = 0.0;
  double d_n = 0.0;
};
MarginValue margin_regularizer(std::span<const float> i, std::span<const float> real, std::span<const float> wrong,
                               float lambda);

// --- Critic ---------------------------------------------------------------

/// 0.5 (E[fake] - E[real]) + 0.5 (E[wrong] - E[real]) over [b x 1] score
/// columns; with `wrong` unset, E[fake] - E[real].
ad::Var critic_objective(ad::Var fake_scores, ad::Var real_scores, const ad::Var* wrong_scores);

struct CriticLoss {
  ad::Var loss;
  DiscriminatorVars vars;
};

/// Discriminator loss with generator and text encoder frozen, so gradients
/// reach only the critic's parameters.
CriticLoss discriminator_loss(ad::Tape& tape, const ModelParams& model, const Batch& batch,
                              const LossOptions& options, Rng& rng);

// --- Generator ------------------------------------------------------------

/// l_g_adv + alpha (div_r + div_w) + beta reg.
ad::Var compose_generator_loss(ad::Var adv, ad::Var div_r, ad::Var div_w, ad::Var reg, float alpha, float beta);

struct GeneratorLoss {
  ad::Var total;
  ad::Var adv, div_r, div_w, reg;
  MarginTerms margin;
  ad::Var representative;  // G(z, c_tr), [b x d_I]
  ad::Var c_hat_tr;
  ad::Var fake_wrong;      // G(z, c_tw), only built when requested
  GeneratorVars generator;
  TextEncoderVars text_encoder;
};

/// Generator loss with the critic frozen; gradients reach the generator and
/// the text encoder. When `build_wrong_representative` is set, G(z, c_tw) is
/// also produced (the joint-training mode needs it for the triplet term).
GeneratorLoss generator_loss(ad::Tape& tape, const ModelParams& model, const Batch& batch,
                             const LossOptions& options, Rng& rng, bool build_wrong_representative = false);

/// Fills the breakdown fields that the generator loss produced.
void fill_breakdown(const GeneratorLoss& loss, LossBreakdown& out);

/// Clamps every critic parameter into [-k, k].
void clip_weights(DiscriminatorParams& disc, float k);

}  // namespace zscr
