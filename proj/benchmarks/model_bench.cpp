#include <benchmark/benchmark.h>

#include "zscr/autodiff.hpp"
#include "zscr/dataset.hpp"
#include "zscr/model.hpp"
#include "zscr/trainer.hpp"

namespace zscr {
namespace {

Dims dims_for(std::size_t width) {
  Dims d;
  d.text_dim = 16;
  d.image_dim = 32;
  d.latent_dim = width / 4;
  d.noise_dim = 16;
  d.gen_hidden1 = width;
  d.gen_hidden2 = width * 2;
  d.disc_hidden = width / 2;
  return d;
}

// Forward pass of G on the tape for a batch of 64.
void BM_Generate(benchmark::State& state) {
  Rng rng(1);
  const ModelParams params = init_params(dims_for(static_cast<std::size_t>(state.range(0))), rng);
  const Tensor z = normal_matrix(64, params.dims.noise_dim, rng);
  const Tensor c = normal_matrix(64, params.dims.latent_dim, rng);
  for (auto _ : state) {
    ad::Tape tape;
    const GeneratorVars g = bind(tape, params.generator, Binding::Frozen);
    const ad::Var out = generate(g, tape.constant_ref(z), tape.constant_ref(c), params.leaky_slope);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Generate)->Arg(256)->Arg(1024)->Arg(2048);

// One outer iteration at it = 1: five critic updates, one generator update
// and one CSEM update (or the joint equivalent).
void BM_OuterIteration(benchmark::State& state) {
  const EmbeddingDataset ds = synth_generate(SyntheticSpec{});
  TrainConfig config;
  config.dims = dims_for(static_cast<std::size_t>(state.range(0)));
  config.joint_mode = state.range(1) != 0;
  Trainer trainer(ds, config);
  for (auto _ : state) trainer.outer_iteration(1);
}
BENCHMARK(BM_OuterIteration)->Args({256, 0})->Args({256, 1})->Args({1024, 0})->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace zscr
