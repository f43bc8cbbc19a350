#include "zscr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "zscr/error.hpp"

namespace zscr {
namespace {

ad::Var zero_scalar(ad::Tape& tape) { return tape.constant(Tensor::scalar(0.0f)); }

double mean_of(ad::Var v) {
  const Tensor& t = v.value();
  double acc = 0.0;
  for (float x : t.data()) acc += x;
  return t.empty() ? 0.0 : acc / static_cast<double>(t.size());
}

}  // namespace

TripletTerms triplet_loss(const CsemVars& csem, ad::Var i, ad::Var i_wrong, ad::Var c_hat_tr) {
  const ad::Var v_p = ad::cosine_rows(csem_map(csem, i), c_hat_tr);
  const ad::Var v_n = ad::cosine_rows(csem_map(csem, i_wrong), c_hat_tr);
  return {ad::mean(ad::softplus(v_n - v_p)), v_p, v_n};
}

TripletTerms triplet_loss_positive_only(const CsemVars& csem, ad::Var i, ad::Var c_hat_tr) {
  const ad::Var v_p = ad::cosine_rows(csem_map(csem, i), c_hat_tr);
  return {ad::mean(ad::softplus(ad::neg(v_p))), v_p, {}};
}

double triplet_value(double v_p, double v_n) {
  const double x = v_n - v_p;
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

MarginTerms margin_regularizer(ad::Var i, ad::Var real, ad::Var wrong, float lambda) {
  if (lambda < 0.0f) throw Error(ErrorKind::DomainError, "margin lambda must be >= 0");
  const ad::Var d_p = ad::l1_rows(real, i);
  const ad::Var d_n = ad::add_scalar(ad::l1_rows(wrong, i), -lambda);
  return {ad::mean(d_p - d_n), d_p, d_n};
}

MarginTerms margin_regularizer_positive_only(ad::Var i, ad::Var real) {
  const ad::Var d_p = ad::l1_rows(real, i);
  return {ad::mean(d_p), d_p, {}};
}

MarginValue margin_regularizer(std::span<const float> i, std::span<const float> real, std::span<const float> wrong,
                               float lambda) {
  if (lambda < 0.0f) throw Error(ErrorKind::DomainError, "margin lambda must be >= 0");
  if (i.size() != real.size() || i.size() != wrong.size()) {
    throw Error(ErrorKind::ShapeMismatch, "margin_regularizer operands differ in length");
  }
  MarginValue out;
  out.d_p = ad::l1_dist(real, i);
  out.d_n = ad::l1_dist(wrong, i) - lambda;
  out.reg = out.d_p - out.d_n;
  return out;
}

ad::Var critic_objective(ad::Var fake_scores, ad::Var real_scores, const ad::Var* wrong_scores) {
  const ad::Var real = ad::mean(real_scores);
  const ad::Var fake_gap = ad::mean(fake_scores) - real;
  if (wrong_scores == nullptr) return fake_gap;
  const ad::Var wrong_gap = ad::mean(*wrong_scores) - real;
  return ad::scale(fake_gap, 0.5f) + ad::scale(wrong_gap, 0.5f);
}

CriticLoss discriminator_loss(ad::Tape& tape, const ModelParams& model, const Batch& batch,
                              const LossOptions& options, Rng& rng) {
  const auto te = bind(tape, model.text_encoder, Binding::Frozen);
  const auto gen = bind(tape, model.generator, Binding::Frozen);
  const auto disc = bind(tape, model.discriminator, Binding::Trainable);

  const ad::Var phi_tr = tape.constant_ref(batch.real_texts);
  const ad::Var real = tape.constant_ref(batch.real_images);
  const ad::Var z = tape.constant(normal_matrix(batch.size(), model.dims.noise_dim, rng));
  const ad::Var c_tr = sample_latent(text_encode(te, phi_tr, model.dims.latent_dim), rng);
  const ad::Var fake = generate(gen, z, c_tr, model.leaky_slope);

  const ad::Var fake_s = discriminate(disc, fake, phi_tr, model.leaky_slope);
  const ad::Var real_s = discriminate(disc, real, phi_tr, model.leaky_slope);
  if (!options.use_wrong_class) return {critic_objective(fake_s, real_s, nullptr), disc};

  const ad::Var wrong_s = discriminate(disc, tape.constant_ref(batch.wrong_images), phi_tr, model.leaky_slope);
  return {critic_objective(fake_s, real_s, &wrong_s), disc};
}

ad::Var compose_generator_loss(ad::Var adv, ad::Var div_r, ad::Var div_w, ad::Var reg, float alpha, float beta) {
  return adv + ad::scale(div_r + div_w, alpha) + ad::scale(reg, beta);
}

GeneratorLoss generator_loss(ad::Tape& tape, const ModelParams& model, const Batch& batch,
                             const LossOptions& options, Rng& rng, bool build_wrong_representative) {
  GeneratorLoss out;
  out.text_encoder = bind(tape, model.text_encoder, Binding::Trainable);
  out.generator = bind(tape, model.generator, Binding::Trainable);
  const auto disc = bind(tape, model.discriminator, Binding::Frozen);
  const std::size_t latent = model.dims.latent_dim;

  const ad::Var phi_tr = tape.constant_ref(batch.real_texts);
  const ad::Var z = tape.constant(normal_matrix(batch.size(), model.dims.noise_dim, rng));
  const CodeVars code_r = text_encode(out.text_encoder, phi_tr, latent);
  out.c_hat_tr = sample_latent(code_r, rng);
  out.representative = generate(out.generator, z, out.c_hat_tr, model.leaky_slope);
  out.adv = ad::neg(ad::mean(discriminate(disc, out.representative, phi_tr, model.leaky_slope)));

  out.div_r = latent_divergence(code_r, options.divergence, rng);
  if (options.use_wrong_class) {
    const CodeVars code_w = text_encode(out.text_encoder, tape.constant_ref(batch.wrong_texts), latent);
    out.div_w = latent_divergence(code_w, options.divergence, rng);
    if (build_wrong_representative) {
      out.fake_wrong = generate(out.generator, z, sample_latent(code_w, rng), model.leaky_slope);
    }
  } else {
    out.div_w = zero_scalar(tape);
  }

  const ad::Var real = tape.constant_ref(batch.real_images);
  if (!options.use_reg) {
    out.reg = zero_scalar(tape);
  } else if (options.use_wrong_class) {
    out.margin = margin_regularizer(out.representative, real, tape.constant_ref(batch.wrong_images), options.lambda);
    out.reg = out.margin.reg;
  } else {
    out.margin = margin_regularizer_positive_only(out.representative, real);
    out.reg = out.margin.reg;
  }

  out.total = compose_generator_loss(out.adv, out.div_r, out.div_w, out.reg, options.alpha, options.beta);
  return out;
}

void fill_breakdown(const GeneratorLoss& loss, LossBreakdown& out) {
  out.l_g_adv = loss.adv.item();
  out.div_r = loss.div_r.item();
  out.div_w = loss.div_w.item();
  out.reg = loss.reg.item();
  out.l_g_total = loss.total.item();
  if (loss.margin.d_p.tape) out.d_p = mean_of(loss.margin.d_p);
  if (loss.margin.d_n.tape) out.d_n = mean_of(loss.margin.d_n);
}

void clip_weights(DiscriminatorParams& disc, float k) {
  if (!(k > 0.0f)) throw Error(ErrorKind::DomainError, "clip bound must be > 0");
  for (Tensor* t : tensors_of(disc)) {
    for (float& w : t->data()) w = std::clamp(w, -k, k);
  }
}

}  // namespace zscr
