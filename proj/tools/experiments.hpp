#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "zscr/config.hpp"
#include "zscr/dataset.hpp"
#include "zscr/retrieval.hpp"
#include "zscr/trainer.hpp"

namespace zscr::tools {

/// Retrieval settings matching how a model was trained (models trained
/// without the generator are queried with the text code directly).
RetrievalOptions retrieval_options_for(const TrainConfig& config, std::size_t k, std::uint64_t seed);

struct CurvePoint {
  std::uint32_t outer_it = 0;
  double prec = 0.0;
};

struct RunResult {
  std::string name;
  TrainConfig config;
  MetricsReport report;
  std::vector<CurvePoint> curve;
};

/// Trains one configuration and evaluates it every `eval_every` outer
/// iterations (and after the last one). eval_every = 0 evaluates only at
/// the end.
RunResult train_and_evaluate(const EmbeddingDataset& ds, const std::string& name, const TrainConfig& config,
                             std::size_t k, std::uint32_t eval_every, std::uint64_t eval_seed);

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

/// The full model followed by no_wrong_class, no_reg+no_triplet, no_triplet,
/// no_reg, no_gan, joint, most_similar and kmeans, all sharing base's seed.
std::vector<AblationVariant> ablation_variants(const TrainConfig& base);

/// `variant,prec_at_<k>,ap_at_<k>,top1`.
void write_ablation_csv(std::ostream& out, const std::vector<RunResult>& runs, std::size_t k);
/// `variant,outer_it,prec_at_<k>`, one row per evaluation.
void write_curves_csv(std::ostream& out, const std::vector<RunResult>& runs, std::size_t k);

}  // namespace zscr::tools
