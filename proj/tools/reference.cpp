#include "reference.hpp"

#include <cmath>
#include <numbers>

namespace zscr::tools::reference {
namespace {

Mat affine(const Params& p, const std::string& layer, const Mat& x) {
  const Mat& w = p.at(layer + ".weight");
  const Mat& b = p.at(layer + ".bias");
  Mat y(x.rows, w.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t j = 0; j < w.cols; ++j) {
      double acc = b(0, j);
      for (std::size_t k = 0; k < x.cols; ++k) acc += x(r, k) * w(k, j);
      y(r, j) = acc;
    }
  }
  return y;
}

Mat leaky(Mat x, double slope) {
  for (double& v : x.v) v = v >= 0.0 ? v : slope * v;
  return x;
}

Mat relu(Mat x) {
  for (double& v : x.v) v = v > 0.0 ? v : 0.0;
  return x;
}

Mat concat(const Mat& a, const Mat& b) {
  Mat out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t j = 0; j < a.cols; ++j) out(r, j) = a(r, j);
    for (std::size_t j = 0; j < b.cols; ++j) out(r, a.cols + j) = b(r, j);
  }
  return out;
}

Mat draw(std::size_t rows, std::size_t cols, Rng& rng) { return promote(normal_matrix(rows, cols, rng)); }

double mean(const Mat& x) {
  double acc = 0.0;
  for (double v : x.v) acc += v;
  return acc / static_cast<double>(x.v.size());
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

std::vector<double> cosine_rows(const Mat& a, const Mat& b) {
  std::vector<double> out(a.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      ab += a(r, j) * b(r, j);
      aa += a(r, j) * a(r, j);
      bb += b(r, j) * b(r, j);
    }
    out[r] = ab / (std::sqrt(aa) * std::sqrt(bb));
  }
  return out;
}

double l1(const Mat& a, const Mat& b, std::size_t r) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.cols; ++j) acc += std::fabs(a(r, j) - b(r, j));
  return acc;
}

}  // namespace

Mat promote(const Tensor& t) {
  Mat m(t.rank() == 2 ? t.rows() : 1, t.rank() == 2 ? t.cols() : t.size());
  for (std::size_t i = 0; i < t.size(); ++i) m.v[i] = t[i];
  return m;
}

Params promote(const ModelParams& model) {
  Params p;
  for (const auto& [name, t] : model.named_tensors()) p.emplace(name, promote(*t));
  return p;
}

Code text_encode(const Params& p, const Mat& phi, std::size_t latent_dim) {
  const Mat out = affine(p, "text_encoder.layer", phi);
  Code c{Mat(phi.rows, latent_dim), Mat(phi.rows, latent_dim)};
  for (std::size_t r = 0; r < phi.rows; ++r) {
    for (std::size_t j = 0; j < latent_dim; ++j) {
      c.mu(r, j) = out(r, j);
      c.log_sigma(r, j) = out(r, latent_dim + j);
    }
  }
  return c;
}

Mat sample_latent(const Code& code, Rng& rng) {
  const Mat eps = draw(code.mu.rows, code.mu.cols, rng);
  Mat c = code.mu;
  for (std::size_t i = 0; i < c.v.size(); ++i) c.v[i] += std::exp(code.log_sigma.v[i]) * eps.v[i];
  return c;
}

double divergence(const Code& code, const DivergenceOptions& options, Rng& rng) {
  const std::size_t rows = code.mu.rows;
  const std::size_t cols = code.mu.cols;
  if (options.mode == DivergenceMode::KlClosedForm) {
    double total = 0.0;
    for (std::size_t i = 0; i < code.mu.v.size(); ++i) {
      const double m = code.mu.v[i];
      const double ls = code.log_sigma.v[i];
      total += std::exp(2.0 * ls) + m * m - 1.0 - 2.0 * ls;
    }
    return 0.5 * total / static_cast<double>(rows);
  }
  // Monte-Carlo Jensen-Shannon divergence between N(mu, sigma^2) and N(0, I).
  const double log2 = std::numbers::ln2;
  double total = 0.0;
  for (std::size_t s = 0; s < options.mc_samples; ++s) {
    const Mat eps = draw(rows, cols, rng);
    const Mat xq = draw(rows, cols, rng);
    double batch = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double log_p_minus_q_at_p = 0.0;
      double log_p_minus_q_at_q = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const double m = code.mu(r, j);
        const double ls = code.log_sigma(r, j);
        const double sigma = std::exp(ls);
        const double xp = m + sigma * eps(r, j);
        // log N(x; m, sigma) - log N(x; 0, 1)
        auto ratio = [&](double x) {
          const double u = (x - m) / sigma;
          return -ls - 0.5 * u * u + 0.5 * x * x;
        };
        log_p_minus_q_at_p += ratio(xp);
        log_p_minus_q_at_q += ratio(xq(r, j));
      }
      batch += (log2 - softplus(-log_p_minus_q_at_p)) + (log2 - softplus(log_p_minus_q_at_q));
    }
    total += batch / static_cast<double>(rows);
  }
  return 0.5 * total / static_cast<double>(options.mc_samples);
}

Mat generate(const Params& p, const Mat& z, const Mat& c, double slope) {
  Mat h = leaky(affine(p, "generator.hidden1", concat(z, c)), slope);
  h = leaky(affine(p, "generator.hidden2", h), slope);
  return relu(affine(p, "generator.output", h));
}

Mat discriminate(const Params& p, const Mat& image, const Mat& phi, double slope) {
  return affine(p, "discriminator.output", leaky(affine(p, "discriminator.hidden", concat(image, phi)), slope));
}

Mat csem_map(const Params& p, const Mat& x) { return relu(affine(p, "csem.layer", x)); }

double critic_loss(const Params& p, const Dims& dims, double slope, const Batch& batch, const LossOptions& o,
                   Rng& rng) {
  const Mat phi = promote(batch.real_texts);
  const Mat z = draw(batch.size(), dims.noise_dim, rng);
  const Mat c = sample_latent(text_encode(p, phi, dims.latent_dim), rng);
  const double fake = mean(discriminate(p, generate(p, z, c, slope), phi, slope));
  const double real = mean(discriminate(p, promote(batch.real_images), phi, slope));
  if (!o.use_wrong_class) return fake - real;
  const double wrong = mean(discriminate(p, promote(batch.wrong_images), phi, slope));
  return 0.5 * (fake - real) + 0.5 * (wrong - real);
}

double generator_total(const Params& p, const Dims& dims, double slope, const Batch& batch, const LossOptions& o,
                       Rng& rng) {
  const Mat phi = promote(batch.real_texts);
  const Mat z = draw(batch.size(), dims.noise_dim, rng);
  const Code code_r = text_encode(p, phi, dims.latent_dim);
  const Mat c = sample_latent(code_r, rng);
  const Mat rep = generate(p, z, c, slope);
  const double adv = -mean(discriminate(p, rep, phi, slope));
  const double div_r = divergence(code_r, o.divergence, rng);
  double div_w = 0.0;
  if (o.use_wrong_class) div_w = divergence(text_encode(p, promote(batch.wrong_texts), dims.latent_dim), o.divergence, rng);

  double reg = 0.0;
  if (o.use_reg) {
    const Mat real = promote(batch.real_images);
    const Mat wrong = promote(batch.wrong_images);
    for (std::size_t r = 0; r < rep.rows; ++r) {
      reg += o.use_wrong_class ? l1(real, rep, r) - (l1(wrong, rep, r) - o.lambda) : l1(real, rep, r);
    }
    reg /= static_cast<double>(rep.rows);
  }
  return adv + o.alpha * (div_r + div_w) + o.beta * reg;
}

double triplet(const Params& p, const Dims& dims, double slope, const Batch& batch, Rng& rng) {
  const Mat z = draw(batch.size(), dims.noise_dim, rng);
  const Mat c_tr = sample_latent(text_encode(p, promote(batch.real_texts), dims.latent_dim), rng);
  const Mat c_tw = sample_latent(text_encode(p, promote(batch.wrong_texts), dims.latent_dim), rng);
  const auto v_p = cosine_rows(csem_map(p, generate(p, z, c_tr, slope)), c_tr);
  const auto v_n = cosine_rows(csem_map(p, generate(p, z, c_tw, slope)), c_tr);
  double total = 0.0;
  for (std::size_t r = 0; r < v_p.size(); ++r) total += softplus(v_n[r] - v_p[r]);
  return total / static_cast<double>(v_p.size());
}

double text_divergence(const Params& p, const Dims& dims, const Batch& batch, const DivergenceOptions& o, Rng& rng) {
  return divergence(text_encode(p, promote(batch.real_texts), dims.latent_dim), o, rng);
}

double margin(const Params& p, const Dims& dims, double slope, const Batch& batch, double lambda, Rng& rng) {
  const Mat z = draw(batch.size(), dims.noise_dim, rng);
  const Mat c = sample_latent(text_encode(p, promote(batch.real_texts), dims.latent_dim), rng);
  const Mat rep = generate(p, z, c, slope);
  const Mat real = promote(batch.real_images);
  const Mat wrong = promote(batch.wrong_images);
  double total = 0.0;
  for (std::size_t r = 0; r < rep.rows; ++r) total += l1(real, rep, r) - l1(wrong, rep, r) + lambda;
  return total / static_cast<double>(rep.rows);
}

}  // namespace zscr::tools::reference
