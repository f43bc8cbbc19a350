#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "zscr/error.hpp"
#include "zscr/losses.hpp"

namespace zscr::tools {
namespace {

Batch toy_batch(const Dims& dims, std::size_t rows, Rng& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto fill = [&](std::size_t cols, bool nonneg) {
    Tensor t({rows, cols});
    for (float& v : t.data()) v = nonneg ? std::fabs(normal(rng)) + 0.1f : normal(rng);
    return t;
  };
  Batch b;
  b.real_images = fill(dims.image_dim, true);
  b.real_texts = fill(dims.text_dim, false);
  b.wrong_images = fill(dims.image_dim, true);
  b.wrong_texts = fill(dims.text_dim, false);
  b.labels.assign(rows, 0);
  b.wrong_labels.assign(rows, 1);
  return b;
}

ModelParams toy_params(const GradCheckOptions& options, Rng& rng) {
  ModelParams model = init_params(options.dims, rng);
  std::normal_distribution<float> bias(0.0f, 0.1f);
  for (auto& [name, t] : model.named_tensors()) {
    if (t->rank() == 2) {
      // gain / sqrt(fan_in) keeps activations and losses O(1)
      std::normal_distribution<float> w(0.0f, options.param_std / std::sqrt(static_cast<float>(t->rows())));
      for (float& v : t->data()) v = w(rng);
    } else {
      for (float& v : t->data()) v = bias(rng);
    }
  }
  // relu outputs: a positive offset keeps whole rows from collapsing to zero
  for (float& v : model.generator.output.bias.data()) v += 0.5f;
  for (float& v : model.csem.layer.bias.data()) v += 0.5f;
  return model;
}

void append(std::vector<ad::Var>& out, const std::vector<ad::Var>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

std::vector<std::string> names_with(const ModelParams& model, std::initializer_list<std::string_view> prefixes) {
  std::vector<std::string> out;
  const auto named = model.named_tensors();
  for (std::string_view prefix : prefixes) {
    for (const auto& [name, t] : named) {
      if (name.starts_with(prefix)) out.push_back(name);
    }
  }
  return out;
}

void record(ad::GradCheckResult& result, std::size_t p, std::size_t i, double a, double n) {
  const double rel = std::fabs(a - n) / std::max(1e-6, std::fabs(a) + std::fabs(n));
  ++result.coordinates;
  if (rel > result.max_rel_error) {
    result.max_rel_error = rel;
    result.worst_param = p;
    result.worst_index = i;
    result.analytic = a;
    result.numeric = n;
  }
}

std::vector<Tensor> analytic_gradients(const ModelLoss& loss, const ModelParams& model, double* value = nullptr) {
  ad::Tape tape;
  std::vector<ad::Var> wrt;
  const ad::Var l = loss(tape, model, wrt);
  tape.backward(l);
  if (value) *value = l.item();
  std::vector<Tensor> out;
  for (ad::Var v : wrt) out.push_back(tape.grad(v));
  return out;
}

}  // namespace

ad::GradCheckResult check_model_loss(const ModelLoss& loss, const TensorSelector& select, ModelParams model,
                                     float eps) {
  const std::vector<Tensor> analytic = analytic_gradients(loss, model);
  const std::vector<Tensor*> targets = select(model);
  if (targets.size() != analytic.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient check: selected tensors and bound leaves differ in count");
  }
  auto value = [&] {
    ad::Tape tape;
    std::vector<ad::Var> wrt;
    return static_cast<double>(loss(tape, model, wrt).item());
  };

  ad::GradCheckResult result;
  for (std::size_t p = 0; p < targets.size(); ++p) {
    Tensor& t = *targets[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float original = t[i];
      const float hi = original + eps;
      const float lo = original - eps;
      t[i] = hi;
      const double up = value();
      t[i] = lo;
      const double down = value();
      t[i] = original;
      record(result, p, i, analytic[p][i], (up - down) / (static_cast<double>(hi) - static_cast<double>(lo)));
    }
  }
  return result;
}

ad::GradCheckResult check_against_reference(const ModelLoss& loss, const ReferenceLoss& ref,
                                            const std::vector<std::string>& names, const ModelParams& model,
                                            double eps) {
  const std::vector<Tensor> analytic = analytic_gradients(loss, model);
  if (names.size() != analytic.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient check: named tensors and bound leaves differ in count");
  }
  reference::Params params = reference::promote(model);
  ad::GradCheckResult result;
  for (std::size_t p = 0; p < names.size(); ++p) {
    std::vector<double>& v = params.at(names[p]).v;
    if (v.size() != analytic[p].size()) {
      throw Error(ErrorKind::ShapeMismatch, "gradient check: size mismatch for " + names[p]);
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double original = v[i];
      v[i] = original + eps;
      const double up = ref(params);
      v[i] = original - eps;
      const double down = ref(params);
      v[i] = original;
      record(result, p, i, analytic[p][i], (up - down) / (2.0 * eps));
    }
  }
  return result;
}

std::vector<GradCheckRow> run_gradchecks(const GradCheckOptions& options) {
  options.dims.validate();
  if (options.batch == 0) throw Error(ErrorKind::ConfigInvalid, "batch must be >= 1");
  Rng rng(options.seed);
  const ModelParams model = toy_params(options, rng);
  const Batch batch = toy_batch(options.dims, options.batch, rng);
  const std::uint64_t loss_seed = options.seed * 0x9e3779b97f4a7c15ULL + 1;
  const Dims dims = model.dims;
  const double slope = model.leaky_slope;

  LossOptions kl;
  LossOptions js = kl;
  js.divergence.mode = DivergenceMode::JsMonteCarlo;
  js.divergence.mc_samples = 4;

  using RefFn = std::function<double(const reference::Params&, Rng&)>;
  struct Check {
    std::string name;
    ModelLoss loss;
    RefFn ref;
    std::vector<std::string> names;
  };
  std::vector<Check> checks;

  checks.push_back({"L_D",
                    [&](ad::Tape& tape, const ModelParams& m, std::vector<ad::Var>& wrt) {
                      Rng r(loss_seed);
                      const CriticLoss c = discriminator_loss(tape, m, batch, kl, r);
                      append(wrt, leaves(c.vars));
                      return c.loss;
                    },
                    [&](const reference::Params& p, Rng& r) {
                      return reference::critic_loss(p, dims, slope, batch, kl, r);
                    },
                    names_with(model, {"discriminator."})});

  for (const auto& [label, opts] : {std::pair{"L_G", kl}, std::pair{"L_G(js)", js}}) {
    checks.push_back({label,
                      [&, opts](ad::Tape& tape, const ModelParams& m, std::vector<ad::Var>& wrt) {
                        Rng r(loss_seed);
                        const GeneratorLoss g = generator_loss(tape, m, batch, opts, r);
                        append(wrt, leaves(g.generator));
                        append(wrt, leaves(g.text_encoder));
                        return g.total;
                      },
                      [&, opts](const reference::Params& p, Rng& r) {
                        return reference::generator_total(p, dims, slope, batch, opts, r);
                      },
                      names_with(model, {"generator.", "text_encoder."})});
  }

  // CSEM and text encoder trainable, generator held fixed as in the M-step.
  checks.push_back({"L_T",
                    [&](ad::Tape& tape, const ModelParams& m, std::vector<ad::Var>& wrt) {
                      Rng r(loss_seed);
                      const auto c = bind(tape, m.csem, Binding::Trainable);
                      const auto t = bind(tape, m.text_encoder, Binding::Trainable);
                      const auto g = bind(tape, m.generator, Binding::Frozen);
                      const ad::Var z = tape.constant(normal_matrix(batch.size(), m.dims.noise_dim, r));
                      const ad::Var c_tr = sample_latent(
                          text_encode(t, tape.constant_ref(batch.real_texts), m.dims.latent_dim), r);
                      const ad::Var c_tw = sample_latent(
                          text_encode(t, tape.constant_ref(batch.wrong_texts), m.dims.latent_dim), r);
                      const TripletTerms terms = triplet_loss(c, generate(g, z, c_tr, m.leaky_slope),
                                                              generate(g, z, c_tw, m.leaky_slope), c_tr);
                      append(wrt, leaves(c));
                      append(wrt, leaves(t));
                      return terms.loss;
                    },
                    [&](const reference::Params& p, Rng& r) { return reference::triplet(p, dims, slope, batch, r); },
                    names_with(model, {"csem.", "text_encoder."})});

  for (const auto& [label, d] :
       {std::pair{"divergence(kl)", kl.divergence}, std::pair{"divergence(js)", js.divergence}}) {
    checks.push_back({label,
                      [&, d](ad::Tape& tape, const ModelParams& m, std::vector<ad::Var>& wrt) {
                        Rng r(loss_seed);
                        const auto t = bind(tape, m.text_encoder, Binding::Trainable);
                        append(wrt, leaves(t));
                        return latent_divergence(
                            text_encode(t, tape.constant_ref(batch.real_texts), m.dims.latent_dim), d, r);
                      },
                      [&, d](const reference::Params& p, Rng& r) {
                        return reference::text_divergence(p, dims, batch, d, r);
                      },
                      names_with(model, {"text_encoder."})});
  }

  checks.push_back({"margin",
                    [&](ad::Tape& tape, const ModelParams& m, std::vector<ad::Var>& wrt) {
                      Rng r(loss_seed);
                      const auto g = bind(tape, m.generator, Binding::Trainable);
                      const auto t = bind(tape, m.text_encoder, Binding::Trainable);
                      const ad::Var z = tape.constant(normal_matrix(batch.size(), m.dims.noise_dim, r));
                      const ad::Var c = sample_latent(
                          text_encode(t, tape.constant_ref(batch.real_texts), m.dims.latent_dim), r);
                      append(wrt, leaves(g));
                      append(wrt, leaves(t));
                      return margin_regularizer(generate(g, z, c, m.leaky_slope),
                                                tape.constant_ref(batch.real_images),
                                                tape.constant_ref(batch.wrong_images), kl.lambda)
                          .reg;
                    },
                    [&](const reference::Params& p, Rng& r) {
                      return reference::margin(p, dims, slope, batch, kl.lambda, r);
                    },
                    names_with(model, {"generator.", "text_encoder."})});

  std::vector<GradCheckRow> rows;
  for (const Check& c : checks) {
    GradCheckRow row;
    row.name = c.name;
    if (options.mode == NumericMode::Self32) {
      const std::vector<std::string> names = c.names;
      const TensorSelector select = [names](ModelParams& m) {
        std::vector<Tensor*> out;
        const auto named = m.named_tensors();
        for (const auto& n : names) {
          for (const auto& [name, t] : named) {
            if (name == n) out.push_back(t);
          }
        }
        return out;
      };
      row.result = check_model_loss(c.loss, select, model, static_cast<float>(options.eps.value_or(1e-3)));
    } else {
      const ReferenceLoss ref = [&](const reference::Params& p) {
        Rng r(loss_seed);
        return c.ref(p, r);
      };
      double value32 = 0.0;
      analytic_gradients(c.loss, model, &value32);
      const double value64 = ref(reference::promote(model));
      row.forward_gap = std::fabs(value32 - value64) / std::max(1.0, std::fabs(value64));
      row.result = check_against_reference(c.loss, ref, c.names, model, options.eps.value_or(1e-6));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace zscr::tools
