#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "experiments.hpp"
#include "gradcheck.hpp"
#include "zscr/checkpoint.hpp"
#include "zscr/config.hpp"
#include "zscr/dataset.hpp"
#include "zscr/error.hpp"
#include "zscr/retrieval.hpp"
#include "zscr/trainer.hpp"

namespace zscr::tools {
namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  return out;
}

/// Options that end up in a TrainConfig. Precedence: defaults < --config
/// file < --set assignments < dedicated flags.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> n_outer;
  std::optional<std::string> inner_cap;
  std::optional<std::string> ablate;
  std::optional<std::string> wrong_class;
  std::optional<std::string> divergence;
  bool joint = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key=value config file");
    app->add_option("--set", assignments, "override one config key (key=value), repeatable");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--n-outer", n_outer, "outer iterations");
    app->add_option("--inner-cap", inner_cap, "cap on the growing inner loop, or 'none'");
    app->add_option("--ablate", ablate, "comma list of no_wrong_class,no_triplet,no_reg,no_gan");
    app->add_option("--wrong-class", wrong_class, "random | most_similar | kmeans");
    app->add_option("--divergence", divergence, "kl | js");
    app->add_flag("--joint", joint, "train the CSEM jointly with the generator");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) c = parse_config_text(read_text(config_path), c);
    for (const auto& a : assignments) {
      const auto [k, v] = split_assignment(a);
      set_config_value(c, k, v);
    }
    if (seed) set_config_value(c, "seed", std::to_string(*seed));
    if (n_outer) set_config_value(c, "n_outer", std::to_string(*n_outer));
    if (inner_cap) set_config_value(c, "inner_cap", *inner_cap);
    if (ablate) set_config_value(c, "ablate", *ablate);
    if (wrong_class) set_config_value(c, "wrong_class", *wrong_class);
    if (divergence) set_config_value(c, "divergence", *divergence);
    if (joint) set_config_value(c, "joint", "true");
    c.validate();
    return c;
  }
};

void banner(std::ostream& err, const TrainConfig& c) {
  err << "# resolved config\n";
  for (const auto& [k, v] : to_key_values(c)) err << "#   " << k << '=' << v << '\n';
}

void require_matching_dims(const Checkpoint& ck, const EmbeddingDataset& ds) {
  if (ck.params.dims.image_dim != ds.image_dim() || ck.params.dims.text_dim != ds.text_dim()) {
    throw Error(ErrorKind::DimsMismatch, "checkpoint has d_I=" + std::to_string(ck.params.dims.image_dim) + ", d_T=" +
                                             std::to_string(ck.params.dims.text_dim) + " but dataset has d_I=" +
                                             std::to_string(ds.image_dim()) + ", d_T=" +
                                             std::to_string(ds.text_dim()));
  }
}

// --- subcommands ------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string out = "synthetic.zsed";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  a.spec.validate();
  const EmbeddingDataset ds = synth_generate(a.spec);
  save_dataset(ds, a.out);
  out << "classes=" << ds.class_count << " seen=" << ds.seen.size() << " unseen=" << ds.unseen.size()
      << " items=" << ds.size() << " d_I=" << ds.image_dim() << " d_T=" << ds.text_dim() << '\n';
  return 0;
}

struct TrainArgs {
  std::string dataset;
  ConfigFlags flags;
  std::string out = "model.zsck";
  std::string log;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const EmbeddingDataset ds = load_dataset(a.dataset);
  const TrainConfig config = a.flags.resolve();
  Trainer trainer(ds, config);
  banner(err, trainer.config());
  const auto start = std::chrono::steady_clock::now();
  trainer.run([&](std::uint32_t it, const Trainer& t) {
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const LossBreakdown& b = t.last_breakdown();
    char buf[160];
    std::snprintf(buf, sizeof buf, "it=%u/%u l_g_adv=%.4f reg=%.4f div_r=%.4f elapsed=%.1fs\n", it, t.config().n_outer,
                  b.l_g_adv, b.reg, b.div_r, secs);
    err << buf;
  });
  save_checkpoint(trainer.checkpoint(), a.out);
  if (!a.log.empty()) {
    auto f = open_out(a.log);
    write_log_csv(f, trainer.log());
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + a.log);
  }
  const UpdateCounters& c = trainer.counters();
  out << "outer=" << c.outer_completed << " d_updates=" << c.discriminator << " g_updates=" << c.generator
      << " csem_updates=" << c.csem << " log_rows=" << trainer.log().size() << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::size_t k = 50;
  std::uint64_t seed = 0;
  std::string out;
  bool classical_ap = false;
  bool sample_latent = false;
  std::size_t noise_draws = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.k == 0) throw Error(ErrorKind::ConfigInvalid, "k must be >= 1");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const EmbeddingDataset ds = load_dataset(a.dataset);
  require_matching_dims(ck, ds);
  RetrievalOptions ro = retrieval_options_for(ck.config, a.k, a.seed);
  ro.classical_ap = a.classical_ap;
  ro.sample_query_latent = a.sample_latent;
  ro.noise_draws = a.noise_draws;
  const MetricsReport report = evaluate(ck.params, ds, ro);
  if (!a.out.empty()) {
    auto f = open_out(a.out);
    write_metrics_csv(f, report);
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + a.out);
  }
  out << format_summary(report) << '\n';
  return 0;
}

struct RetrieveArgs {
  std::string checkpoint;
  std::string dataset;
  std::uint32_t class_id = 0;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
  if (a.k == 0) throw Error(ErrorKind::ConfigInvalid, "k must be >= 1");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const EmbeddingDataset ds = load_dataset(a.dataset);
  require_matching_dims(ck, ds);
  if (!ds.is_unseen(a.class_id)) {
    throw Error(ErrorKind::UnknownClass, "class " + std::to_string(a.class_id) + " is not in the unseen split");
  }
  const ClassQuery query = per_class_text_embedding(ds, a.class_id);
  const auto pool = ds.items_of(ds.unseen);
  const RankedRetrieval ranked = retrieve(ck.params, query, ds, pool, retrieval_options_for(ck.config, a.k, a.seed));
  char buf[96];
  for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
    const auto& e = ranked.entries[r];
    const ClassId label = ds.labels[e.image_index];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%u,%d\n", r + 1, e.image_index, e.sim, label,
                  label == a.class_id ? 1 : 0);
    out << buf;
  }
  return 0;
}

struct GradcheckArgs {
  GradCheckOptions options;
  double threshold = 1e-2;
  double eps = 0.0;
  std::string numeric = "reference";
};

int cmd_gradcheck(GradcheckArgs a, std::ostream& out) {
  if (a.eps > 0.0) a.options.eps = a.eps;
  a.options.mode = a.numeric == "self" ? NumericMode::Self32 : NumericMode::Reference64;
  const auto rows = run_gradchecks(a.options);
  bool ok = true;
  out << "loss,max_rel_error,coordinates,worst_tensor,worst_index,analytic,numeric,forward_gap,status\n";
  char buf[224];
  for (const auto& r : rows) {
    const bool pass = r.result.max_rel_error < a.threshold && r.forward_gap <= kMaxForwardGap;
    ok = ok && pass;
    std::snprintf(buf, sizeof buf, ",%.3e,%zu,%zu,%zu,%.6e,%.6e,%.3e,%s\n", r.result.max_rel_error,
                  r.result.coordinates, r.result.worst_param, r.result.worst_index, r.result.analytic,
                  r.result.numeric, r.forward_gap, pass ? "pass" : "FAIL");
    out << r.name << buf;
  }
  return ok ? 0 : 1;
}

struct AblateArgs {
  std::string dataset;
  ConfigFlags flags;
  std::string out = "ablation";
  std::size_t k = 50;
  std::uint32_t eval_every = 5;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const EmbeddingDataset ds = load_dataset(a.dataset);
  const TrainConfig base = a.flags.resolve();
  banner(err, base);
  std::vector<RunResult> runs;
  for (const auto& v : ablation_variants(base)) {
    err << "# variant " << v.name << '\n';
    runs.push_back(train_and_evaluate(ds, v.name, v.config, a.k, a.eval_every, base.seed));
  }
  fs::create_directories(a.out);
  {
    auto f = open_out(fs::path(a.out) / "ablation.csv");
    write_ablation_csv(f, runs, a.k);
  }
  {
    auto f = open_out(fs::path(a.out) / "curves.csv");
    write_curves_csv(f, runs, a.k);
  }
  write_ablation_csv(out, runs, a.k);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot cross-modal retrieval with a text-conditioned generator and a common embedding"};
  app.name("zscr");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a synthetic dataset");
  s->add_option("--classes", synth.spec.n_classes, "number of classes");
  s->add_option("--seen", synth.spec.n_seen, "number of seen classes");
  s->add_option("--items", synth.spec.items_per_class, "items per class");
  s->add_option("--di", synth.spec.image_dim, "image embedding width");
  s->add_option("--dt", synth.spec.text_dim, "text embedding width");
  s->add_option("--image-noise", synth.spec.image_noise_std, "image noise std");
  s->add_option("--text-noise", synth.spec.text_noise_std, "text noise std");
  s->add_option("--seed", synth.spec.seed, "random seed");
  s->add_option("-o,--out", synth.out, "output .zsed path");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model on a dataset");
  t->add_option("dataset", train.dataset, "input .zsed")->required();
  train.flags.attach(t);
  t->add_option("-o,--out", train.out, "output checkpoint");
  t->add_option("--log", train.log, "training log CSV");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate unseen-class retrieval");
  e->add_option("checkpoint", ev.checkpoint, "trained .zsck")->required();
  e->add_option("dataset", ev.dataset, "input .zsed")->required();
  e->add_option("--k", ev.k, "retrieval depth");
  e->add_option("--seed", ev.seed, "query noise seed");
  e->add_option("-o,--out", ev.out, "per-class metrics CSV");
  e->add_flag("--classical-ap", ev.classical_ap, "divide AP by min(#relevant, k)");
  e->add_flag("--sample-latent", ev.sample_latent, "sample the query code instead of using its mean");
  e->add_option("--noise-draws", ev.noise_draws, "average the query over this many noise draws");

  RetrieveArgs rt;
  auto* r = app.add_subcommand("retrieve", "rank unseen images for one class");
  r->add_option("checkpoint", rt.checkpoint, "trained .zsck")->required();
  r->add_option("dataset", rt.dataset, "input .zsed")->required();
  r->add_option("--class", rt.class_id, "unseen class id")->required();
  r->add_option("--k", rt.k, "number of results");
  r->add_option("--seed", rt.seed, "query noise seed");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "compare loss gradients with central differences");
  g->add_option("--seed", gc.options.seed, "random seed");
  g->add_option("--threshold", gc.threshold, "maximum accepted relative error");
  g->add_option("--eps", gc.eps, "finite-difference step (default 1e-6 reference, 1e-3 self)");
  g->add_option("--numeric", gc.numeric, "numeric side: 64-bit reference or the 32-bit loss itself")
      ->check(CLI::IsMember({"reference", "self"}));
  g->add_option("--di", gc.options.dims.image_dim, "image width");
  g->add_option("--dt", gc.options.dims.text_dim, "text width");
  g->add_option("--latent", gc.options.dims.latent_dim, "latent width");
  g->add_option("--noise", gc.options.dims.noise_dim, "noise width");
  g->add_option("--hidden1", gc.options.dims.gen_hidden1, "generator hidden width 1");
  g->add_option("--hidden2", gc.options.dims.gen_hidden2, "generator hidden width 2");
  g->add_option("--disc-hidden", gc.options.dims.disc_hidden, "critic hidden width");
  g->add_option("--batch", gc.options.batch, "rows in the toy batch");
  g->add_option("--param-std", gc.options.param_std, "standard deviation of the toy parameters");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train and evaluate the ablation and design-choice variants");
  a->add_option("dataset", ab.dataset, "input .zsed")->required();
  ab.flags.attach(a);
  a->add_option("-o,--out", ab.out, "output directory");
  a->add_option("--k", ab.k, "retrieval depth");
  a->add_option("--eval-every", ab.eval_every, "evaluate every this many outer iterations");

  std::vector<const char*> argv{"zscr"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out, err);
    if (e->parsed()) return cmd_eval(ev, out);
    if (r->parsed()) return cmd_retrieve(rt, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
    if (a->parsed()) return cmd_ablate(ab, out, err);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return is_validation_error(ex.kind()) ? 1 : 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace zscr::tools
