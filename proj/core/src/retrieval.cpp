#include "zscr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <random>

#include "zscr/error.hpp"

namespace zscr {
namespace {

double norm_of(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

void check_model(const ModelParams& model, const EmbeddingDataset& ds) {
  if (model.dims.image_dim != ds.image_dim() || model.dims.text_dim != ds.text_dim()) {
    throw Error(ErrorKind::ModelUntrained, "model dims (d_I=" + std::to_string(model.dims.image_dim) + ", d_T=" +
                                               std::to_string(model.dims.text_dim) + ") do not match dataset (d_I=" +
                                               std::to_string(ds.image_dim()) + ", d_T=" +
                                               std::to_string(ds.text_dim()) + ")");
  }
}

}  // namespace

Rng query_rng(std::uint64_t seed, ClassId class_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), class_id,
                    0x71756572u};
  return Rng(seq);
}

Tensor query_representation(const ModelParams& model, const ClassQuery& query, const RetrievalOptions& options) {
  if (options.noise_draws == 0) throw Error(ErrorKind::ConfigInvalid, "noise_draws must be >= 1");
  Rng rng = query_rng(options.seed, query.class_id);
  const GaussianCode code = text_encode(model, query.phi);
  if (options.bypass_generator) return options.sample_query_latent ? sample_latent(code, rng) : code.mu;

  Tensor theta = Tensor::zeros({model.dims.latent_dim});
  for (std::size_t m = 0; m < options.noise_draws; ++m) {
    const Tensor z = normal_matrix(1, model.dims.noise_dim, rng);
    const Tensor c = options.sample_query_latent ? sample_latent(code, rng) : code.mu;
    const Tensor t = csem_map(model, generate(model, Tensor::vector({z.data().begin(), z.data().end()}), c));
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += t[j];
  }
  if (options.noise_draws > 1) {
    const float inv = 1.0f / static_cast<float>(options.noise_draws);
    for (float& v : theta.data()) v *= inv;
  }
  return theta;
}

Tensor candidate_representations(const ModelParams& model, const Tensor& images) {
  if (images.cols() != model.dims.image_dim) {
    throw Error(ErrorKind::ShapeMismatch, "candidate width " + std::to_string(images.cols()) + ", expected " +
                                              std::to_string(model.dims.image_dim));
  }
  ad::Tape tape;
  const auto c = bind(tape, model.csem, Binding::Frozen);
  return csem_map(c, tape.constant_ref(images)).value();
}

RankedRetrieval rank_candidates(ClassId query_class, std::span<const float> query, const Tensor& candidates,
                                std::span<const std::size_t> indices, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::DomainError, "k must be >= 1");
  if (indices.size() != candidates.rows() && !(indices.empty() && candidates.empty())) {
    throw Error(ErrorKind::ShapeMismatch, "candidate rows and indices differ in count");
  }
  const double qn = norm_of(query);
  if (qn < ad::kMinNorm) {
    throw Error(ErrorKind::ZeroVector, "query representation of class " + std::to_string(query_class) + " is zero");
  }
  RankedRetrieval out;
  out.query_class = query_class;
  out.k = k;
  out.entries.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto row = candidates.row(r);
    const double cn = norm_of(row);
    if (cn < ad::kMinNorm) {
      throw Error(ErrorKind::ZeroVector, "candidate representation of item " + std::to_string(indices[r]) + " is zero");
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) dot += static_cast<double>(query[j]) * row[j];
    out.entries.push_back({dot / (qn * cn), indices[r]});
  }
  const auto before = [](const RankedEntry& a, const RankedEntry& b) {
    return a.sim != b.sim ? a.sim > b.sim : a.image_index < b.image_index;
  };
  const std::size_t depth = std::min(k, out.entries.size());
  std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(depth),
                    out.entries.end(), before);
  out.entries.resize(depth);
  return out;
}

RankedRetrieval retrieve(const ModelParams& model, const ClassQuery& query, const EmbeddingDataset& ds,
                         std::span<const std::size_t> candidates, const RetrievalOptions& options) {
  check_model(model, ds);
  Tensor images({candidates.size(), ds.image_dim()});
  for (std::size_t r = 0; r < candidates.size(); ++r) std::ranges::copy(ds.image(candidates[r]), images.row(r).begin());
  const Tensor theta_t = query_representation(model, query, options);
  const Tensor theta_i = candidates.empty() ? Tensor({0, model.dims.latent_dim})
                                            : candidate_representations(model, images);
  return rank_candidates(query.class_id, theta_t.data(), theta_i, candidates, options.k);
}

double precision_at_k(std::span<const bool> hits, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::DomainError, "k must be >= 1");
  const std::size_t depth = std::min(k, hits.size());
  const auto n = std::count(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(depth), true);
  return static_cast<double>(n) / static_cast<double>(k);
}

double average_precision_at_k(std::span<const bool> hits, std::size_t k, bool classical, std::size_t total_relevant) {
  if (k == 0) throw Error(ErrorKind::DomainError, "k must be >= 1");
  const std::size_t depth = std::min(k, hits.size());
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (!hits[r]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(r + 1);
  }
  if (found == 0) return 0.0;
  if (!classical) return sum / static_cast<double>(found);
  const std::size_t denom = std::min(std::max(total_relevant, found), k);
  return sum / static_cast<double>(denom);
}

std::vector<bool> relevance_pattern(const RankedRetrieval& ranked, const std::unordered_set<std::size_t>& relevant) {
  std::vector<bool> hits;
  hits.reserve(ranked.entries.size());
  for (const auto& e : ranked.entries) hits.push_back(relevant.contains(e.image_index));
  return hits;
}

namespace {
// std::vector<bool> has no contiguous storage; copy into a plain array.
struct HitArray {
  std::unique_ptr<bool[]> data;
  std::size_t size = 0;
  std::span<const bool> span() const { return {data.get(), size}; }
};
HitArray hit_array(const std::vector<bool>& v) {
  HitArray h{std::make_unique<bool[]>(v.size()), v.size()};
  std::copy(v.begin(), v.end(), h.data.get());
  return h;
}
}  // namespace

double precision_at_k(const RankedRetrieval& ranked, const std::unordered_set<std::size_t>& relevant) {
  return precision_at_k(hit_array(relevance_pattern(ranked, relevant)).span(), ranked.k);
}

double average_precision_at_k(const RankedRetrieval& ranked, const std::unordered_set<std::size_t>& relevant,
                              bool classical) {
  return average_precision_at_k(hit_array(relevance_pattern(ranked, relevant)).span(), ranked.k, classical,
                                relevant.size());
}

double top1_accuracy(std::span<const RankedRetrieval> rankings,
                     std::span<const std::unordered_set<std::size_t>> relevant) {
  if (rankings.empty()) throw Error(ErrorKind::EmptyQuerySet, "top-1 accuracy needs at least one query");
  if (rankings.size() != relevant.size()) {
    throw Error(ErrorKind::ShapeMismatch, "rankings and relevance sets differ in count");
  }
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& e = rankings[q].entries;
    if (!e.empty() && relevant[q].contains(e.front().image_index)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

MetricsReport evaluate(const ModelParams& model, const EmbeddingDataset& ds, const RetrievalOptions& options) {
  if (ds.unseen.empty()) throw Error(ErrorKind::EmptyUnseenSplit, "dataset has no unseen classes");
  check_model(model, ds);
  const std::vector<std::size_t> pool = ds.items_of(ds.unseen);
  if (pool.empty()) throw Error(ErrorKind::EmptyUnseenSplit, "unseen split has no items");

  Tensor images({pool.size(), ds.image_dim()});
  for (std::size_t r = 0; r < pool.size(); ++r) std::ranges::copy(ds.image(pool[r]), images.row(r).begin());
  const Tensor theta_i = candidate_representations(model, images);

  MetricsReport report;
  report.k = options.k;
  const auto by_class = ds.items_by_class();
  for (ClassId c : ds.unseen) {
    const ClassQuery query = per_class_text_embedding(ds, c);
    const Tensor theta_t = query_representation(model, query, options);
    const RankedRetrieval ranked = rank_candidates(c, theta_t.data(), theta_i, pool, options.k);
    const std::unordered_set<std::size_t> relevant(by_class[c].begin(), by_class[c].end());

    QueryMetrics m;
    m.class_id = c;
    m.prec_at_k = precision_at_k(ranked, relevant);
    m.ap_at_k = average_precision_at_k(ranked, relevant, options.classical_ap);
    m.top1_hit = !ranked.entries.empty() && relevant.contains(ranked.entries.front().image_index);
    for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
      if (relevant.contains(ranked.entries[r].image_index)) m.relevant_ranks.push_back(r + 1);
    }
    report.per_query.push_back(std::move(m));
  }

  double p = 0.0, a = 0.0, t = 0.0;
  for (const auto& m : report.per_query) {
    p += m.prec_at_k;
    a += m.ap_at_k;
    t += m.top1_hit ? 1.0 : 0.0;
  }
  const double q = static_cast<double>(report.per_query.size());
  report.prec = p / q;
  report.map = a / q;
  report.top1 = t / q;
  return report;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "class_id,prec_at_" << report.k << ",ap_at_" << report.k << ",top1_hit\n";
  char buf[96];
  for (const auto& m : report.per_query) {
    std::snprintf(buf, sizeof buf, "%u,%.6f,%.6f,%d\n", m.class_id, m.prec_at_k, m.ap_at_k, m.top1_hit ? 1 : 0);
    out << buf;
  }
}

std::string format_summary(const MetricsReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f", report.query_count(), report.prec, report.map, report.top1);
  return buf;
}

}  // namespace zscr
