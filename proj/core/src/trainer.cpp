#include "zscr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "zscr/checkpoint.hpp"
#include "zscr/error.hpp"

namespace zscr {
namespace {

template <typename Block, typename Vars>
void apply_update(ad::Tape& tape, Block& block, const Vars& vars, RmsPropState& state, float lr) {
  const std::vector<Tensor*> params = tensors_of(block);
  std::vector<const Tensor*> grads;
  for (ad::Var v : leaves(vars)) grads.push_back(&tape.grad(v));
  rmsprop_update(params, grads, state, lr);
}

}  // namespace

// --- Optimizer ------------------------------------------------------------

RmsPropState RmsPropState::zeros_like(std::span<Tensor* const> params, float rho, float epsilon) {
  RmsPropState s;
  s.rho = rho;
  s.epsilon = epsilon;
  for (const Tensor* p : params) s.mean_square.push_back(Tensor::zeros(p->shape()));
  return s;
}

void rmsprop_update(std::span<Tensor* const> params, std::span<const Tensor* const> grads, RmsPropState& state,
                    float lr) {
  if (params.size() != grads.size() || params.size() != state.mean_square.size()) {
    throw Error(ErrorKind::ShapeMismatch, "rmsprop_update: parameter, gradient and state counts differ");
  }
  const float rho = state.rho;
  const float eps = state.epsilon;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& w = *params[t];
    const Tensor& g = *grads[t];
    Tensor& s = state.mean_square[t];
    if (w.shape() != g.shape() || w.shape() != s.shape()) {
      throw Error(ErrorKind::ShapeMismatch, "rmsprop_update: shapes " + shape_string(w.shape()) + ", " +
                                                shape_string(g.shape()) + ", " + shape_string(s.shape()));
    }
    float* wp = w.raw();
    float* sp = s.raw();
    const float* gp = g.raw();
    for (std::size_t i = 0; i < w.size(); ++i) {
      sp[i] = rho * sp[i] + (1.0f - rho) * gp[i] * gp[i];
      wp[i] -= lr * gp[i] / (std::sqrt(sp[i]) + eps);
    }
  }
}

// --- Wrong-class selection ------------------------------------------------

std::vector<std::uint32_t> kmeans_assign(const Tensor& points, std::size_t k, std::size_t iterations,
                                         std::uint64_t seed) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (k == 0 || k > n) throw Error(ErrorKind::ConfigInvalid, "kmeans needs 1 <= k <= number of points");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> centroids(k * d);
  for (std::size_t c = 0; c < k; ++c) {
    const auto p = points.row(order[c]);
    std::copy(p.begin(), p.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  }

  std::vector<std::uint32_t> assign(n, 0);
  for (std::size_t iter = 0; iter < iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = points.row(i);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = p[j] - centroids[c * d + j];
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          best_c = static_cast<std::uint32_t>(c);
        }
      }
      if (assign[i] != best_c) changed = true;
      assign[i] = best_c;
    }

    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += p[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
    if (!changed && iter > 0) break;
  }
  return assign;
}

WrongClassSelector::WrongClassSelector(const EmbeddingDataset& ds, WrongClassMode mode, std::uint64_t seed)
    : mode_(mode), seen_(ds.seen) {
  std::sort(seen_.begin(), seen_.end());
  if (seen_.size() < 2) {
    throw Error(ErrorKind::SingleClassDataset, "wrong-class selection needs at least 2 seen classes");
  }
  if (mode == WrongClassMode::Random) return;

  partner_.assign(ds.class_count, 0);
  if (mode == WrongClassMode::MostSimilar) {
    std::vector<Tensor> queries(ds.class_count);
    for (ClassId c : seen_) queries[c] = per_class_text_embedding(ds, c).phi;
    for (ClassId y : seen_) {
      double best = -std::numeric_limits<double>::infinity();
      ClassId best_c = y;
      for (ClassId c : seen_) {
        if (c == y) continue;
        const double sim = ad::cosine_sim(queries[y].data(), queries[c].data());
        if (sim > best) {
          best = sim;
          best_c = c;
        }
      }
      partner_[y] = best_c;
    }
    return;
  }

  // K-Means over seen-class images; the partner of y is the class whose
  // images share clusters with y's images most often.
  const std::vector<std::size_t> items = ds.items_of(seen_);
  Tensor points({items.size(), ds.image_dim()});
  for (std::size_t r = 0; r < items.size(); ++r) {
    const auto src = ds.image(items[r]);
    std::copy(src.begin(), src.end(), points.row(r).begin());
  }
  const std::size_t k = seen_.size();
  const auto assign = kmeans_assign(points, k, kKMeansIterations, seed);

  std::vector<std::vector<std::uint64_t>> per_cluster(k, std::vector<std::uint64_t>(ds.class_count, 0));
  for (std::size_t r = 0; r < items.size(); ++r) ++per_cluster[assign[r]][ds.labels[items[r]]];
  for (ClassId y : seen_) {
    std::uint64_t best = 0;
    ClassId best_c = y;
    for (ClassId c : seen_) {
      if (c == y) continue;
      std::uint64_t co = 0;
      for (std::size_t cl = 0; cl < k; ++cl) co += per_cluster[cl][y] * per_cluster[cl][c];
      if (best_c == y || co > best) {
        best = co;
        best_c = c;
      }
    }
    partner_[y] = best_c;
  }
}

ClassId WrongClassSelector::select(ClassId y, Rng& rng) const {
  if (mode_ != WrongClassMode::Random) return partner_.at(y);
  // Uniform over seen classes other than y.
  std::uniform_int_distribution<std::size_t> pick(0, seen_.size() - 2);
  const std::size_t idx = pick(rng);
  const auto pos = std::lower_bound(seen_.begin(), seen_.end(), y);
  const std::size_t y_idx = (pos != seen_.end() && *pos == y) ? static_cast<std::size_t>(pos - seen_.begin())
                                                              : seen_.size();
  return seen_[idx >= y_idx ? idx + 1 : idx];
}

BatchSampler::BatchSampler(const EmbeddingDataset& ds, WrongClassSelector selector)
    : ds_(&ds), selector_(std::move(selector)), seen_items_(ds.items_of(ds.seen)), by_class_(ds.items_by_class()) {
  if (seen_items_.empty()) throw Error(ErrorKind::EmptyDataset, "no items in seen classes");
}

Batch BatchSampler::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw Error(ErrorKind::ConfigInvalid, "batch_size must be >= 1");
  const EmbeddingDataset& ds = *ds_;
  const std::size_t di = ds.image_dim();
  const std::size_t dt = ds.text_dim();
  Batch b;
  b.real_images = Tensor({batch_size, di});
  b.real_texts = Tensor({batch_size, dt});
  b.wrong_images = Tensor({batch_size, di});
  b.wrong_texts = Tensor({batch_size, dt});
  b.labels.resize(batch_size);
  b.wrong_labels.resize(batch_size);

  std::uniform_int_distribution<std::size_t> pick_seen(0, seen_items_.size() - 1);
  for (std::size_t r = 0; r < batch_size; ++r) {
    const std::size_t item = seen_items_[pick_seen(rng)];
    const ClassId y = ds.labels[item];
    const ClassId wrong = selector_.select(y, rng);
    const auto& pool = by_class_.at(wrong);
    if (pool.empty()) throw Error(ErrorKind::EmptyClass, "wrong class " + std::to_string(wrong) + " has no items");
    std::uniform_int_distribution<std::size_t> pick_wrong(0, pool.size() - 1);
    const std::size_t w_item = pool[pick_wrong(rng)];

    std::ranges::copy(ds.image(item), b.real_images.row(r).begin());
    std::ranges::copy(ds.text(item), b.real_texts.row(r).begin());
    std::ranges::copy(ds.image(w_item), b.wrong_images.row(r).begin());
    std::ranges::copy(ds.text(w_item), b.wrong_texts.row(r).begin());
    b.labels[r] = y;
    b.wrong_labels[r] = wrong;
  }
  return b;
}

Batch sample_batch(const EmbeddingDataset& ds, const WrongClassSelector& selector, std::size_t batch_size, Rng& rng) {
  return BatchSampler(ds, selector).sample(batch_size, rng);
}

// --- Log ------------------------------------------------------------------

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Discriminator: return "D";
    case Phase::Generator: return "G";
    case Phase::Csem: return "C";
  }
  return "?";
}

void write_log_csv(std::ostream& out, std::span<const LogRecord> log) {
  out << kTrainLogHeader << '\n';
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(9);
    s << v;
    return s.str();
  };
  for (const auto& r : log) {
    out << r.outer_it << ',' << to_string(r.phase) << ',' << r.step << ',' << num(r.l_d) << ',' << num(r.l_g_adv)
        << ',' << num(r.div_r) << ',' << num(r.div_w) << ',' << num(r.reg) << ',' << num(r.l_t) << '\n';
  }
}

// --- Trainer --------------------------------------------------------------

namespace {

const EmbeddingDataset& checked(const EmbeddingDataset& ds, const TrainConfig& config) {
  validate_split(ds);
  if (ds.seen.empty()) throw Error(ErrorKind::EmptyDataset, "dataset has no seen classes");
  config.validate();
  return ds;
}

OptimizerStates fresh_states(ModelParams& p, float rho, float eps) {
  return {RmsPropState::zeros_like(tensors_of(p.text_encoder), rho, eps),
          RmsPropState::zeros_like(tensors_of(p.generator), rho, eps),
          RmsPropState::zeros_like(tensors_of(p.discriminator), rho, eps),
          RmsPropState::zeros_like(tensors_of(p.csem), rho, eps)};
}

TrainConfig with_dataset_dims(TrainConfig config, const EmbeddingDataset& ds) {
  config.dims.text_dim = ds.text_dim();
  config.dims.image_dim = ds.image_dim();
  return config;
}

}  // namespace

Trainer::Trainer(const EmbeddingDataset& ds, TrainConfig config)
    : ds_(&ds),
      config_(with_dataset_dims(std::move(config), ds)),
      rng_(config_.seed),
      sampler_(ds, WrongClassSelector(checked(ds, config_), config_.wrong_class_mode,
                                      config_.seed ^ 0x6b6d65616e73ULL)) {
  params_ = init_params(config_.dims, rng_, config_.leaky_slope);
  opt_ = fresh_states(params_, config_.rms_rho, config_.rms_epsilon);
}

Trainer::Trainer(const EmbeddingDataset& ds, const Checkpoint& ck)
    : ds_(&ds),
      config_(ck.config),
      sampler_(ds, WrongClassSelector(checked(ds, ck.config), ck.config.wrong_class_mode,
                                      ck.config.seed ^ 0x6b6d65616e73ULL)),
      counters_(ck.counters) {
  if (ck.params.dims.text_dim != ds.text_dim() || ck.params.dims.image_dim != ds.image_dim()) {
    throw Error(ErrorKind::DimsMismatch, "checkpoint dims do not match dataset");
  }
  params_ = ck.params;
  opt_ = ck.optimizer;
  std::istringstream in(ck.rng_state);
  in >> rng_;
  if (!in) throw Error(ErrorKind::FormatError, "unreadable random engine state");
}

LossOptions Trainer::loss_options() const {
  LossOptions o;
  o.alpha = config_.alpha;
  o.beta = config_.beta;
  o.lambda = config_.lambda;
  o.divergence = config_.divergence;
  o.use_wrong_class = !config_.ablation.no_wrong_class;
  o.use_reg = !config_.ablation.no_reg;
  return o;
}

void Trainer::discriminator_update(std::uint32_t it, std::uint32_t step) {
  const Batch batch = sampler_.sample(config_.batch_size, rng_);
  ad::Tape tape;
  const CriticLoss loss = discriminator_loss(tape, params_, batch, loss_options(), rng_);
  tape.backward(loss.loss);
  apply_update(tape, params_.discriminator, loss.vars, opt_.discriminator, config_.lr);
  clip_weights(params_.discriminator, config_.clip_k);
  ++counters_.discriminator;

  LogRecord rec;
  rec.outer_it = it;
  rec.phase = Phase::Discriminator;
  rec.step = step;
  rec.l_d = loss.loss.item();
  log_.push_back(rec);
}

void Trainer::generator_update(std::uint32_t it, std::uint32_t step, bool joint) {
  const Batch batch = sampler_.sample(config_.batch_size, rng_);
  const LossOptions options = loss_options();
  const bool with_triplet = joint && !config_.ablation.no_triplet;
  ad::Tape tape;
  GeneratorLoss loss =
      generator_loss(tape, params_, batch, options, rng_, with_triplet && options.use_wrong_class);

  ad::Var objective = loss.total;
  CsemVars csem{};
  LossBreakdown breakdown;
  if (with_triplet) {
    csem = bind(tape, params_.csem, Binding::Trainable);
    const TripletTerms t = options.use_wrong_class
                               ? triplet_loss(csem, loss.representative, loss.fake_wrong, loss.c_hat_tr)
                               : triplet_loss_positive_only(csem, loss.representative, loss.c_hat_tr);
    objective = objective + t.loss;
    breakdown.l_t = t.loss.item();
  }
  tape.backward(objective);
  apply_update(tape, params_.generator, loss.generator, opt_.generator, config_.lr);
  apply_update(tape, params_.text_encoder, loss.text_encoder, opt_.text_encoder, config_.lr);
  if (with_triplet) {
    apply_update(tape, params_.csem, csem, opt_.csem, config_.lr);
    ++counters_.csem;
  }
  ++counters_.generator;

  fill_breakdown(loss, breakdown);
  last_breakdown_ = breakdown;
  LogRecord rec;
  rec.outer_it = it;
  rec.phase = Phase::Generator;
  rec.step = step;
  rec.l_g_adv = breakdown.l_g_adv;
  rec.div_r = breakdown.div_r;
  rec.div_w = breakdown.div_w;
  rec.reg = breakdown.reg;
  rec.l_t = breakdown.l_t;
  log_.push_back(rec);
}

void Trainer::csem_update(std::uint32_t it, std::uint32_t step) {
  const Batch batch = sampler_.sample(config_.batch_size, rng_);
  const bool use_wrong = !config_.ablation.no_wrong_class;
  const std::size_t latent = params_.dims.latent_dim;
  ad::Tape tape;
  const auto te = bind(tape, params_.text_encoder, Binding::Frozen);
  const auto csem = bind(tape, params_.csem, Binding::Trainable);

  const ad::Var c_tr = sample_latent(text_encode(te, tape.constant_ref(batch.real_texts), latent), rng_);
  ad::Var positive;
  ad::Var negative;
  if (config_.ablation.no_gan) {
    // Without the generator the CSEM is trained on the raw image embeddings.
    positive = tape.constant_ref(batch.real_images);
    negative = tape.constant_ref(batch.wrong_images);
  } else {
    const auto gen = bind(tape, params_.generator, Binding::Frozen);
    const ad::Var z = tape.constant(normal_matrix(batch.size(), params_.dims.noise_dim, rng_));
    positive = generate(gen, z, c_tr, params_.leaky_slope);
    if (use_wrong) {
      const ad::Var c_tw =
          sample_latent(text_encode(te, tape.constant_ref(batch.wrong_texts), latent), rng_);
      negative = generate(gen, z, c_tw, params_.leaky_slope);
    }
  }
  const TripletTerms t = use_wrong ? triplet_loss(csem, positive, negative, c_tr)
                                   : triplet_loss_positive_only(csem, positive, c_tr);
  tape.backward(t.loss);
  apply_update(tape, params_.csem, csem, opt_.csem, config_.lr);
  ++counters_.csem;

  LogRecord rec;
  rec.outer_it = it;
  rec.phase = Phase::Csem;
  rec.step = step;
  rec.l_t = t.loss.item();
  log_.push_back(rec);
}

void Trainer::e_step(std::uint32_t it) {
  if (it < 1) throw Error(ErrorKind::ConfigInvalid, "outer iteration index must be >= 1");
  if (config_.ablation.no_gan) return;
  const std::uint32_t inner = config_.inner_steps(it);
  std::uint32_t d_step = 0;
  for (std::uint32_t j = 1; j <= inner; ++j) {
    for (std::uint32_t l = 0; l < config_.d_steps; ++l) discriminator_update(it, ++d_step);
    generator_update(it, j, false);
  }
}

void Trainer::m_step(std::uint32_t it) {
  if (it < 1) throw Error(ErrorKind::ConfigInvalid, "outer iteration index must be >= 1");
  if (config_.ablation.no_triplet) return;
  const std::uint32_t inner = config_.inner_steps(it);
  for (std::uint32_t j = 1; j <= inner; ++j) csem_update(it, j);
}

void Trainer::joint_step(std::uint32_t it) {
  if (it < 1) throw Error(ErrorKind::ConfigInvalid, "outer iteration index must be >= 1");
  const std::uint32_t inner = config_.inner_steps(it);
  std::uint32_t d_step = 0;
  for (std::uint32_t j = 1; j <= inner; ++j) {
    for (std::uint32_t l = 0; l < config_.d_steps; ++l) discriminator_update(it, ++d_step);
    generator_update(it, j, true);
  }
}

void Trainer::outer_iteration(std::uint32_t it) {
  if (config_.joint_mode) {
    joint_step(it);
  } else {
    e_step(it);
    m_step(it);
  }
  counters_.outer_completed = it;
}

void Trainer::run(const std::function<void(std::uint32_t, const Trainer&)>& on_outer) {
  for (std::uint32_t it = counters_.outer_completed + 1; it <= config_.n_outer; ++it) {
    outer_iteration(it);
    if (on_outer) on_outer(it, *this);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.params = params_;
  ck.optimizer = opt_;
  std::ostringstream out;
  out << rng_;
  ck.rng_state = out.str();
  ck.counters = counters_;
  return ck;
}

TrainResult train(const EmbeddingDataset& ds, const TrainConfig& config) {
  Trainer trainer(ds, config);
  trainer.run();
  return {trainer.params(), trainer.log(), trainer.counters()};
}

}  // namespace zscr
