#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "zscr/config.hpp"
#include "zscr/dataset.hpp"
#include "zscr/losses.hpp"
#include "zscr/model.hpp"

namespace zscr {

// --- Optimizer ------------------------------------------------------------

struct RmsPropState {
  std::vector<Tensor> mean_square;  // one accumulator per parameter tensor
  float rho = 0.9f;
  float epsilon = 1e-8f;

  static RmsPropState zeros_like(std::span<Tensor* const> params, float rho, float epsilon);
};

/// s <- rho s + (1 - rho) g^2;  w <- w - lr g / (sqrt(s) + eps).
void rmsprop_update(std::span<Tensor* const> params, std::span<const Tensor* const> grads, RmsPropState& state,
                    float lr);

// --- Wrong-class selection ------------------------------------------------

/// Lloyd's algorithm on the rows of `points`; initial centroids are k distinct
/// rows picked with `seed`. Returns the cluster index of every row.
std::vector<std::uint32_t> kmeans_assign(const Tensor& points, std::size_t k, std::size_t iterations,
                                         std::uint64_t seed);

inline constexpr std::size_t kKMeansIterations = 50;

/// Chooses the wrong class paired with each training row. The deterministic
/// modes are tabulated once at construction from the seen classes.
class WrongClassSelector {
 public:
  WrongClassSelector(const EmbeddingDataset& ds, WrongClassMode mode, std::uint64_t seed);

  ClassId select(ClassId y, Rng& rng) const;
  WrongClassMode mode() const noexcept { return mode_; }
  /// Fixed partner of class y in the most_similar / kmeans modes.
  ClassId partner(ClassId y) const { return partner_.at(y); }

 private:
  WrongClassMode mode_;
  std::vector<ClassId> seen_;
  std::vector<ClassId> partner_;
};

class BatchSampler {
 public:
  BatchSampler(const EmbeddingDataset& ds, WrongClassSelector selector);
  BatchSampler(EmbeddingDataset&&, WrongClassSelector) = delete;

  /// Rows drawn uniformly with replacement from seen-class items; each row's
  /// wrong pair is a uniform item of the selected wrong class.
  Batch sample(std::size_t batch_size, Rng& rng) const;
  const WrongClassSelector& selector() const noexcept { return selector_; }

 private:
  const EmbeddingDataset* ds_;
  WrongClassSelector selector_;
  std::vector<std::size_t> seen_items_;
  std::vector<std::vector<std::size_t>> by_class_;
};

Batch sample_batch(const EmbeddingDataset& ds, const WrongClassSelector& selector, std::size_t batch_size, Rng& rng);

// --- Training schedule ----------------------------------------------------

enum class Phase { Discriminator, Generator, Csem };
std::string_view to_string(Phase phase);

struct LogRecord {
  std::uint32_t outer_it = 0;
  Phase phase = Phase::Discriminator;
  std::uint32_t step = 0;
  double l_d = 0.0;
  double l_g_adv = 0.0;
  double div_r = 0.0;
  double div_w = 0.0;
  double reg = 0.0;
  double l_t = 0.0;
};

inline constexpr std::string_view kTrainLogHeader = "outer_it,phase,step,l_d,l_g_adv,div_r,div_w,reg,l_t";
void write_log_csv(std::ostream& out, std::span<const LogRecord> log);

struct UpdateCounters {
  std::uint64_t discriminator = 0;
  std::uint64_t generator = 0;
  std::uint64_t csem = 0;
  std::uint32_t outer_completed = 0;
};

struct OptimizerStates {
  RmsPropState text_encoder;
  RmsPropState generator;
  RmsPropState discriminator;
  RmsPropState csem;
};

struct Checkpoint;

/// Alternating training: each outer iteration `it` runs the GAN phase
/// (critic and generator/text-encoder updates, CSEM frozen) and then the CSEM
/// phase (generator frozen), each repeated min(it, inner_cap) times.
class Trainer {
 public:
  Trainer(const EmbeddingDataset& ds, TrainConfig config);
  /// Resumes from a checkpoint written by checkpoint().
  Trainer(const EmbeddingDataset& ds, const Checkpoint& checkpoint);
  // The trainer keeps a pointer to the dataset.
  Trainer(EmbeddingDataset&&, const TrainConfig&) = delete;
  Trainer(EmbeddingDataset&&, const Checkpoint&) = delete;

  /// GAN phase of outer iteration `it`; the CSEM is untouched.
  void e_step(std::uint32_t it);
  /// CSEM phase of outer iteration `it`; generator, critic and text encoder
  /// are untouched.
  void m_step(std::uint32_t it);
  /// Joint alternative to e_step + m_step: the generator update minimizes
  /// L_G + L_T and the CSEM receives gradients at the same time.
  void joint_step(std::uint32_t it);

  /// One complete outer iteration according to the configured mode.
  void outer_iteration(std::uint32_t it);
  /// Runs the remaining outer iterations up to config.n_outer. The callback,
  /// if given, sees the trainer after each outer iteration.
  void run(const std::function<void(std::uint32_t, const Trainer&)>& on_outer = {});

  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  const TrainConfig& config() const noexcept { return config_; }
  const std::vector<LogRecord>& log() const noexcept { return log_; }
  const UpdateCounters& counters() const noexcept { return counters_; }
  const OptimizerStates& optimizer() const noexcept { return opt_; }
  const Rng& rng() const noexcept { return rng_; }

  /// The most recent generator breakdown (for identity checks).
  const LossBreakdown& last_breakdown() const noexcept { return last_breakdown_; }

  Checkpoint checkpoint() const;

 private:
  LossOptions loss_options() const;
  void discriminator_update(std::uint32_t it, std::uint32_t step);
  void generator_update(std::uint32_t it, std::uint32_t step, bool joint);
  void csem_update(std::uint32_t it, std::uint32_t step);

  const EmbeddingDataset* ds_;
  TrainConfig config_;
  Rng rng_;
  ModelParams params_;
  OptimizerStates opt_;
  BatchSampler sampler_;
  std::vector<LogRecord> log_;
  UpdateCounters counters_;
  LossBreakdown last_breakdown_;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogRecord> log;
  UpdateCounters counters;
};

/// Validates the config against the dataset, then trains for n_outer
/// iterations from a fresh initialization.
TrainResult train(const EmbeddingDataset& ds, const TrainConfig& config);

}  // namespace zscr
