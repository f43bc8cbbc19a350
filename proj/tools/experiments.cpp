#include "experiments.hpp"

#include <cstdio>
#include <ostream>

namespace zscr::tools {

RetrievalOptions retrieval_options_for(const TrainConfig& config, std::size_t k, std::uint64_t seed) {
  RetrievalOptions o;
  o.k = k;
  o.seed = seed;
  o.bypass_generator = config.ablation.no_gan;
  return o;
}

RunResult train_and_evaluate(const EmbeddingDataset& ds, const std::string& name, const TrainConfig& config,
                             std::size_t k, std::uint32_t eval_every, std::uint64_t eval_seed) {
  RunResult out;
  out.name = name;
  Trainer trainer(ds, config);
  out.config = trainer.config();
  const RetrievalOptions ro = retrieval_options_for(trainer.config(), k, eval_seed);
  trainer.run([&](std::uint32_t it, const Trainer& t) {
    if (it == t.config().n_outer || (eval_every > 0 && it % eval_every == 0)) {
      MetricsReport r = evaluate(t.params(), ds, ro);
      out.curve.push_back({it, r.prec});
      if (it == t.config().n_outer) out.report = std::move(r);
    }
  });
  return out;
}

std::vector<AblationVariant> ablation_variants(const TrainConfig& base) {
  std::vector<AblationVariant> v;
  auto add = [&](std::string name, auto&& edit) {
    TrainConfig c = base;
    edit(c);
    v.push_back({std::move(name), c});
  };
  add("full", [](TrainConfig&) {});
  add("no_wrong_class", [](TrainConfig& c) { c.ablation.no_wrong_class = true; });
  add("no_reg+no_triplet", [](TrainConfig& c) {
    c.ablation.no_reg = true;
    c.ablation.no_triplet = true;
  });
  add("no_triplet", [](TrainConfig& c) { c.ablation.no_triplet = true; });
  add("no_reg", [](TrainConfig& c) { c.ablation.no_reg = true; });
  add("no_gan", [](TrainConfig& c) { c.ablation.no_gan = true; });
  add("joint", [](TrainConfig& c) { c.joint_mode = true; });
  add("most_similar", [](TrainConfig& c) { c.wrong_class_mode = WrongClassMode::MostSimilar; });
  add("kmeans", [](TrainConfig& c) { c.wrong_class_mode = WrongClassMode::KMeans; });
  return v;
}

void write_ablation_csv(std::ostream& out, const std::vector<RunResult>& runs, std::size_t k) {
  out << "variant,prec_at_" << k << ",ap_at_" << k << ",top1\n";
  char buf[64];
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", r.report.prec, r.report.map, r.report.top1);
    out << r.name << buf;
  }
}

void write_curves_csv(std::ostream& out, const std::vector<RunResult>& runs, std::size_t k) {
  out << "variant,outer_it,prec_at_" << k << '\n';
  char buf[48];
  for (const auto& r : runs) {
    for (const auto& p : r.curve) {
      std::snprintf(buf, sizeof buf, ",%u,%.6f\n", p.outer_it, p.prec);
      out << r.name << buf;
    }
  }
}

}  // namespace zscr::tools
