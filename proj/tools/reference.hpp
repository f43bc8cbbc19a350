#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "zscr/losses.hpp"
#include "zscr/model.hpp"

// Plain 64-bit loops re-deriving every loss without the tape. Random draws
// come from the same generator calls in the same order as the tape
// versions, so with equal seeds both evaluate the same function.
namespace zscr::tools::reference {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

/// Parameters by serialized name, promoted to double; biases are 1 x n.
using Params = std::map<std::string, Mat>;

Params promote(const ModelParams& model);
Mat promote(const Tensor& t);

struct Code {
  Mat mu;
  Mat log_sigma;
};

Code text_encode(const Params& p, const Mat& phi, std::size_t latent_dim);
Mat sample_latent(const Code& code, Rng& rng);
double divergence(const Code& code, const DivergenceOptions& options, Rng& rng);
Mat generate(const Params& p, const Mat& z, const Mat& c, double slope);
Mat discriminate(const Params& p, const Mat& image, const Mat& phi, double slope);
Mat csem_map(const Params& p, const Mat& x);

double critic_loss(const Params& p, const Dims& dims, double slope, const Batch& batch, const LossOptions& o,
                   Rng& rng);
double generator_total(const Params& p, const Dims& dims, double slope, const Batch& batch, const LossOptions& o,
                       Rng& rng);
/// Triplet loss on G(z, c_tr) and G(z, c_tw) with c_tr as anchor.
double triplet(const Params& p, const Dims& dims, double slope, const Batch& batch, Rng& rng);
double text_divergence(const Params& p, const Dims& dims, const Batch& batch, const DivergenceOptions& o, Rng& rng);
/// Margin regularizer of G(z, c_tr) against the real and wrong images.
double margin(const Params& p, const Dims& dims, double slope, const Batch& batch, double lambda, Rng& rng);

}  // namespace zscr::tools::reference
