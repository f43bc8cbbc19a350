#include "zscr/model.hpp"

#include <cmath>
#include <numbers>

#include "zscr/error.hpp"

namespace zscr {
namespace {

Affine make_affine(std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<float> normal(0.0f, kInitStddev);
  Affine layer{Tensor({in, out}), Tensor({out})};
  for (float& w : layer.weight.data()) w = normal(rng);
  for (float& b : layer.bias.data()) b = normal(rng);
  return layer;
}

void check_affine(const Affine& layer, std::size_t in, std::size_t out, const std::string& name) {
  const Tensor::Shape w{in, out};
  const Tensor::Shape b{out};
  if (layer.weight.shape() != w || layer.bias.shape() != b) {
    throw Error(ErrorKind::ShapeMismatch, name + " expects weight " + shape_string(w) + " bias " + shape_string(b) +
                                              ", got " + shape_string(layer.weight.shape()) + " / " +
                                              shape_string(layer.bias.shape()));
  }
  if (!layer.weight.all_finite() || !layer.bias.all_finite()) {
    throw Error(ErrorKind::NonFinite, name + " has non-finite parameters");
  }
}

Tensor as_row(const Tensor& v, std::size_t expected, const char* what) {
  if (v.size() != expected || v.rank() > 2 || (v.rank() == 2 && v.rows() != 1)) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + " expects a vector of length " +
                                              std::to_string(expected) + ", got " + shape_string(v.shape()));
  }
  return Tensor({1, expected}, std::vector<float>(v.data().begin(), v.data().end()));
}

Tensor as_vector(const Tensor& row) { return Tensor::vector(std::vector<float>(row.data().begin(), row.data().end())); }

template <typename Self>
auto collect_named(Self& self) {
  using Ptr = std::conditional_t<std::is_const_v<Self>, const Tensor*, Tensor*>;
  std::vector<std::pair<std::string, Ptr>> out;
  auto push = [&out](const std::string& prefix, auto& layer) {
    out.emplace_back(prefix + ".weight", &layer.weight);
    out.emplace_back(prefix + ".bias", &layer.bias);
  };
  push("text_encoder.layer", self.text_encoder.layer);
  push("generator.hidden1", self.generator.hidden1);
  push("generator.hidden2", self.generator.hidden2);
  push("generator.output", self.generator.output);
  push("discriminator.hidden", self.discriminator.hidden);
  push("discriminator.output", self.discriminator.output);
  push("csem.layer", self.csem.layer);
  return out;
}

}  // namespace

void Dims::validate() const {
  const std::pair<const char*, std::size_t> fields[] = {
      {"text_dim", text_dim},       {"image_dim", image_dim},     {"latent_dim", latent_dim},
      {"noise_dim", noise_dim},     {"gen_hidden1", gen_hidden1}, {"gen_hidden2", gen_hidden2},
      {"disc_hidden", disc_hidden},
  };
  for (const auto& [name, value] : fields) {
    if (value == 0) throw Error(ErrorKind::ConfigInvalid, std::string(name) + " must be positive");
  }
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() { return collect_named(*this); }

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
  return collect_named(*this);
}

void ModelParams::validate() const {
  dims.validate();
  const Dims& d = dims;
  check_affine(text_encoder.layer, d.text_dim, 2 * d.latent_dim, "text_encoder.layer");
  check_affine(generator.hidden1, d.noise_dim + d.latent_dim, d.gen_hidden1, "generator.hidden1");
  check_affine(generator.hidden2, d.gen_hidden1, d.gen_hidden2, "generator.hidden2");
  check_affine(generator.output, d.gen_hidden2, d.image_dim, "generator.output");
  check_affine(discriminator.hidden, d.image_dim + d.text_dim, d.disc_hidden, "discriminator.hidden");
  check_affine(discriminator.output, d.disc_hidden, 1, "discriminator.output");
  check_affine(csem.layer, d.image_dim, d.latent_dim, "csem.layer");
}

std::vector<Tensor*> tensors_of(TextEncoderParams& p) { return {&p.layer.weight, &p.layer.bias}; }
std::vector<Tensor*> tensors_of(GeneratorParams& p) {
  return {&p.hidden1.weight, &p.hidden1.bias, &p.hidden2.weight,
          &p.hidden2.bias,   &p.output.weight, &p.output.bias};
}
std::vector<Tensor*> tensors_of(DiscriminatorParams& p) {
  return {&p.hidden.weight, &p.hidden.bias, &p.output.weight, &p.output.bias};
}
std::vector<Tensor*> tensors_of(CsemParams& p) { return {&p.layer.weight, &p.layer.bias}; }

ModelParams init_params(const Dims& dims, Rng& rng, float leaky_slope) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  p.leaky_slope = leaky_slope;
  p.text_encoder.layer = make_affine(dims.text_dim, 2 * dims.latent_dim, rng);
  p.generator.hidden1 = make_affine(dims.noise_dim + dims.latent_dim, dims.gen_hidden1, rng);
  p.generator.hidden2 = make_affine(dims.gen_hidden1, dims.gen_hidden2, rng);
  p.generator.output = make_affine(dims.gen_hidden2, dims.image_dim, rng);
  p.discriminator.hidden = make_affine(dims.image_dim + dims.text_dim, dims.disc_hidden, rng);
  p.discriminator.output = make_affine(dims.disc_hidden, 1, rng);
  p.csem.layer = make_affine(dims.image_dim, dims.latent_dim, rng);
  return p;
}

// --- Tape-level -----------------------------------------------------------

AffineVars bind(ad::Tape& tape, const Affine& layer, Binding binding) {
  if (binding == Binding::Trainable) return {tape.parameter(layer.weight), tape.parameter(layer.bias)};
  return {tape.constant_ref(layer.weight), tape.constant_ref(layer.bias)};
}

TextEncoderVars bind(ad::Tape& tape, const TextEncoderParams& p, Binding binding) {
  return {bind(tape, p.layer, binding)};
}

GeneratorVars bind(ad::Tape& tape, const GeneratorParams& p, Binding binding) {
  return {bind(tape, p.hidden1, binding), bind(tape, p.hidden2, binding), bind(tape, p.output, binding)};
}

DiscriminatorVars bind(ad::Tape& tape, const DiscriminatorParams& p, Binding binding) {
  return {bind(tape, p.hidden, binding), bind(tape, p.output, binding)};
}

CsemVars bind(ad::Tape& tape, const CsemParams& p, Binding binding) { return {bind(tape, p.layer, binding)}; }

ad::Var affine(const AffineVars& layer, ad::Var x) {
  return ad::add_row_vector(ad::matmul(x, layer.weight), layer.bias);
}

CodeVars text_encode(const TextEncoderVars& te, ad::Var phi, std::size_t latent_dim) {
  const ad::Var out = affine(te.layer, phi);
  return {ad::slice_cols(out, 0, latent_dim), ad::slice_cols(out, latent_dim, latent_dim)};
}

Tensor normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Tensor t({rows, cols});
  for (float& v : t.data()) v = normal(rng);
  return t;
}

ad::Var sample_latent(const CodeVars& code, Rng& rng) {
  const Tensor& mu = code.mu.value();
  ad::Tape& tape = *code.mu.tape;
  const ad::Var eps = tape.constant(normal_matrix(mu.rows(), mu.cols(), rng));
  return code.mu + ad::exp(code.log_sigma) * eps;
}

ad::Var latent_divergence(const CodeVars& code, const DivergenceOptions& options, Rng& rng) {
  ad::Tape& tape = *code.mu.tape;
  const ad::Var mu = code.mu;
  const ad::Var ls = code.log_sigma;

  if (options.mode == DivergenceMode::KlClosedForm) {
    // 1/2 sum_j (sigma^2 + mu^2 - 1 - log sigma^2)
    const ad::Var terms = ad::add_scalar(ad::exp(ad::scale(ls, 2.0f)) + mu * mu - ad::scale(ls, 2.0f), -1.0f);
    return ad::scale(ad::mean(ad::sum_rows(terms)), 0.5f);
  }

  // Jensen-Shannon against the equal mixture M = (P + Q) / 2, with P the code
  // and Q = N(0, I). Per sample, log p - log m = log 2 - softplus(log q - log p),
  // so only the log-density ratio r = log p - log q is needed.
  if (options.mc_samples == 0) throw Error(ErrorKind::ConfigInvalid, "js_samples must be positive");
  const std::size_t rows = mu.value().rows();
  const std::size_t cols = mu.value().cols();
  const float log2 = std::numbers::ln2_v<float>;
  const ad::Var inv_var = ad::exp(ad::scale(ls, -2.0f));
  ad::Var total = tape.constant(Tensor::scalar(0.0f));
  for (std::size_t s = 0; s < options.mc_samples; ++s) {
    // x ~ P via reparameterization; (x - mu) / sigma == eps exactly.
    const ad::Var eps = tape.constant(normal_matrix(rows, cols, rng));
    const ad::Var xp = mu + ad::exp(ls) * eps;
    const ad::Var rp = ad::sum_rows(ad::scale(xp * xp, 0.5f) - ls - ad::scale(eps * eps, 0.5f));
    const ad::Var from_p = ad::add_scalar(ad::neg(ad::softplus(ad::neg(rp))), log2);

    // x ~ Q, independent of the parameters.
    const ad::Var xq = tape.constant(normal_matrix(rows, cols, rng));
    const ad::Var diff = xq - mu;
    const ad::Var rq = ad::sum_rows(ad::scale(xq * xq, 0.5f) - ls - ad::scale(diff * diff * inv_var, 0.5f));
    const ad::Var from_q = ad::add_scalar(ad::neg(ad::softplus(rq)), log2);

    total = total + ad::mean(from_p + from_q);
  }
  return ad::scale(total, 0.5f / static_cast<float>(options.mc_samples));
}

ad::Var generate(const GeneratorVars& g, ad::Var z, ad::Var c_hat, float leaky_slope) {
  ad::Var h = ad::leaky_relu(affine(g.hidden1, ad::concat_cols(z, c_hat)), leaky_slope);
  h = ad::leaky_relu(affine(g.hidden2, h), leaky_slope);
  return ad::relu(affine(g.output, h));
}

ad::Var discriminate(const DiscriminatorVars& d, ad::Var image, ad::Var phi, float leaky_slope) {
  const ad::Var h = ad::leaky_relu(affine(d.hidden, ad::concat_cols(image, phi)), leaky_slope);
  return affine(d.output, h);
}

std::vector<ad::Var> leaves(const TextEncoderVars& v) { return {v.layer.weight, v.layer.bias}; }
std::vector<ad::Var> leaves(const GeneratorVars& v) {
  return {v.hidden1.weight, v.hidden1.bias, v.hidden2.weight, v.hidden2.bias, v.output.weight, v.output.bias};
}
std::vector<ad::Var> leaves(const DiscriminatorVars& v) {
  return {v.hidden.weight, v.hidden.bias, v.output.weight, v.output.bias};
}
std::vector<ad::Var> leaves(const CsemVars& v) { return {v.layer.weight, v.layer.bias}; }

ad::Var csem_map(const CsemVars& c, ad::Var embedding) { return ad::relu(affine(c.layer, embedding)); }

// --- Single-sample --------------------------------------------------------

GaussianCode text_encode(const ModelParams& params, const Tensor& phi) {
  ad::Tape tape;
  const auto te = bind(tape, params.text_encoder, Binding::Frozen);
  const auto code = text_encode(te, tape.constant(as_row(phi, params.dims.text_dim, "text_encode")),
                                params.dims.latent_dim);
  return {as_vector(code.mu.value()), as_vector(code.log_sigma.value())};
}

Tensor sample_latent(const GaussianCode& code, Rng& rng) {
  if (code.mu.size() != code.log_sigma.size()) {
    throw Error(ErrorKind::ShapeMismatch, "mu and log_sigma lengths differ");
  }
  ad::Tape tape;
  const std::size_t n = code.mu.size();
  const CodeVars vars{tape.constant(as_row(code.mu, n, "sample_latent")),
                      tape.constant(as_row(code.log_sigma, n, "sample_latent"))};
  return as_vector(sample_latent(vars, rng).value());
}

double latent_divergence(const GaussianCode& code, const DivergenceOptions& options, Rng& rng) {
  if (code.mu.size() != code.log_sigma.size()) {
    throw Error(ErrorKind::ShapeMismatch, "mu and log_sigma lengths differ");
  }
  ad::Tape tape;
  const std::size_t n = code.mu.size();
  const CodeVars vars{tape.constant(as_row(code.mu, n, "latent_divergence")),
                      tape.constant(as_row(code.log_sigma, n, "latent_divergence"))};
  return latent_divergence(vars, options, rng).item();
}

Tensor generate(const ModelParams& params, const Tensor& z, const Tensor& c_hat) {
  ad::Tape tape;
  const auto g = bind(tape, params.generator, Binding::Frozen);
  const ad::Var out = generate(g, tape.constant(as_row(z, params.dims.noise_dim, "generate")),
                               tape.constant(as_row(c_hat, params.dims.latent_dim, "generate")), params.leaky_slope);
  return as_vector(out.value());
}

float discriminate(const ModelParams& params, const Tensor& image, const Tensor& phi) {
  ad::Tape tape;
  const auto d = bind(tape, params.discriminator, Binding::Frozen);
  return discriminate(d, tape.constant(as_row(image, params.dims.image_dim, "discriminate")),
                      tape.constant(as_row(phi, params.dims.text_dim, "discriminate")), params.leaky_slope)
      .item();
}

Tensor csem_map(const ModelParams& params, const Tensor& embedding) {
  ad::Tape tape;
  const auto c = bind(tape, params.csem, Binding::Frozen);
  return as_vector(csem_map(c, tape.constant(as_row(embedding, params.dims.image_dim, "csem_map"))).value());
}

}  // namespace zscr
