#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "zscr/dataset.hpp"
#include "zscr/model.hpp"

namespace zscr {

struct RankedEntry {
  double sim = 0.0;
  std::size_t image_index = 0;
};

/// Entries descend by similarity; equal similarities keep ascending index.
struct RankedRetrieval {
  ClassId query_class = 0;
  std::vector<RankedEntry> entries;
  std::size_t k = 0;
};

struct RetrievalOptions {
  std::size_t k = 50;
  std::uint64_t seed = 0;
  /// Use a reparameterized sample of the text code instead of its mean.
  bool sample_query_latent = false;
  /// Number of z draws averaged into the query representation.
  std::size_t noise_draws = 1;
  /// Compare the text code directly with CSEM(I); for models trained
  /// without the generator.
  bool bypass_generator = false;
  /// AP divides by min(#relevant, k) instead of by the number of hits.
  bool classical_ap = false;
};

/// Random stream for the query noise of one class.
Rng query_rng(std::uint64_t seed, ClassId class_id);

/// theta_t = CSEM(G(z, c_t)) for one query (or c_t itself when bypassing).
Tensor query_representation(const ModelParams& model, const ClassQuery& query, const RetrievalOptions& options);

/// CSEM rows for a batch of image embeddings, [n x d_c].
Tensor candidate_representations(const ModelParams& model, const Tensor& images);

/// Top-k of the rows of `candidates` by cosine similarity with `query`.
/// `indices[r]` is the item id reported for row r.
RankedRetrieval rank_candidates(ClassId query_class, std::span<const float> query, const Tensor& candidates,
                                std::span<const std::size_t> indices, std::size_t k);

/// Ranks the given dataset items for the query. ModelUntrained when the model
/// dims disagree with the dataset, ZeroVector when a representation vanishes.
RankedRetrieval retrieve(const ModelParams& model, const ClassQuery& query, const EmbeddingDataset& ds,
                         std::span<const std::size_t> candidates, const RetrievalOptions& options);

// Metrics on a relevance pattern: hits[r] says whether rank r+1 is relevant.
// Ranks past the end of `hits` count as misses.

double precision_at_k(std::span<const bool> hits, std::size_t k);
/// Mean of Precision@r over the relevant ranks r <= k (0 when none). With
/// `classical`, divides by min(total_relevant, k) instead.
double average_precision_at_k(std::span<const bool> hits, std::size_t k, bool classical = false,
                              std::size_t total_relevant = 0);

std::vector<bool> relevance_pattern(const RankedRetrieval& ranked, const std::unordered_set<std::size_t>& relevant);
double precision_at_k(const RankedRetrieval& ranked, const std::unordered_set<std::size_t>& relevant);
double average_precision_at_k(const RankedRetrieval& ranked, const std::unordered_set<std::size_t>& relevant,
                              bool classical = false);
/// EmptyQuerySet when `rankings` is empty.
double top1_accuracy(std::span<const RankedRetrieval> rankings,
                     std::span<const std::unordered_set<std::size_t>> relevant);

struct QueryMetrics {
  ClassId class_id = 0;
  double prec_at_k = 0.0;
  double ap_at_k = 0.0;
  bool top1_hit = false;
  std::vector<std::size_t> relevant_ranks;  // 1-based
};

struct MetricsReport {
  std::size_t k = 50;
  std::vector<QueryMetrics> per_query;
  double prec = 0.0;
  double map = 0.0;
  double top1 = 0.0;

  std::size_t query_count() const noexcept { return per_query.size(); }
};

/// One query per unseen class (its mean text embedding) ranked against every
/// unseen-split item. EmptyUnseenSplit when there is nothing to query.
MetricsReport evaluate(const ModelParams& model, const EmbeddingDataset& ds, const RetrievalOptions& options);

/// `class_id,prec_at_<k>,ap_at_<k>,top1_hit` then one row per query.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
/// `Q,prec,map,top1` as one comma-separated line of values.
std::string format_summary(const MetricsReport& report);

}  // namespace zscr
