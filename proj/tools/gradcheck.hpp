#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reference.hpp"
#include "zscr/autodiff.hpp"
#include "zscr/model.hpp"

namespace zscr::tools {

/// Builds a loss from `model` on `tape` and appends the bound leaves whose
/// gradients are checked to `wrt`, in the order of the selected tensors.
using ModelLoss = std::function<ad::Var(ad::Tape& tape, const ModelParams& model, std::vector<ad::Var>& wrt)>;
using TensorSelector = std::function<std::vector<Tensor*>(ModelParams& model)>;

/// Central differences of the 32-bit loss itself against reverse mode. The
/// loss must be deterministic (reseed any randomness inside `loss`).
ad::GradCheckResult check_model_loss(const ModelLoss& loss, const TensorSelector& select, ModelParams model,
                                     float eps = 1e-3f);

/// Reverse-mode gradients of the 32-bit loss against central differences of
/// a 64-bit evaluation of the same function. `names` lists the checked
/// tensors in the order `loss` appends its leaves.
using ReferenceLoss = std::function<double(const reference::Params& params)>;
ad::GradCheckResult check_against_reference(const ModelLoss& loss, const ReferenceLoss& ref,
                                            const std::vector<std::string>& names, const ModelParams& model,
                                            double eps);

enum class NumericMode {
  Reference64,  // differences of the 64-bit reference evaluation
  Self32,       // differences of the 32-bit loss
};

struct GradCheckOptions {
  Dims dims{.text_dim = 4, .image_dim = 6, .latent_dim = 6, .noise_dim = 3, .gen_hidden1 = 8, .gen_hidden2 = 8,
            .disc_hidden = 6};
  std::size_t batch = 6;
  std::uint64_t seed = 1;
  NumericMode mode = NumericMode::Reference64;
  /// Default 1e-6 for the 64-bit reference, 1e-3 for the 32-bit loss.
  std::optional<double> eps;
  /// Toy weights are drawn at param_std / sqrt(fan_in).
  float param_std = 1.0f;
};

struct GradCheckRow {
  std::string name;
  ad::GradCheckResult result;
  /// |loss32 - loss64| / max(1, |loss64|); 0 in Self32 mode.
  double forward_gap = 0.0;
};

/// Largest accepted forward_gap; beyond it the two evaluations disagree.
inline constexpr double kMaxForwardGap = 1e-4;

/// L_D, L_G (KL and JS divergence), L_T, the divergences alone and the
/// margin regularizer at toy dims.
std::vector<GradCheckRow> run_gradchecks(const GradCheckOptions& options);

}  // namespace zscr::tools
