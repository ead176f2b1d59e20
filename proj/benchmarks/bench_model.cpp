#include <benchmark/benchmark.h>

#include <random>

#include "exref/attribution.hpp"
#include "exref/loss.hpp"
#include "exref/model.hpp"
#include "fixtures.hpp"

using namespace exref;

namespace {

constexpr int kDim = 64, kHidden = 32;

void BM_Forward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto mode = state.range(0) ? ModelMode::kAdditive : ModelMode::kMlp;
  const ModelState m = fixtures::random_model(rng, mode, kDim, kHidden, 2);
  const Matrix X = fixtures::random_matrix(rng, static_cast<int>(state.range(1)), kDim);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, X));
}
BENCHMARK(BM_Forward)->ArgNames({"additive", "tokens"})->ArgsProduct({{0, 1}, {8, 32}});

void BM_IntegratedGradients(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, kDim, kHidden, 2);
  const Matrix X = fixtures::random_matrix(rng, 16, kDim);
  const Vector base = Vector::Zero(kDim);
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(integrated_gradients(m, X, base, 1, steps));
}
BENCHMARK(BM_IntegratedGradients)->Arg(32)->Arg(256);

void BM_SocImportance(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, kDim, kHidden, 2);
  const Matrix X = fixtures::random_matrix(rng, 16, kDim);
  std::vector<Vector> reps;
  for (int i = 0; i < 50; ++i) reps.push_back(fixtures::random_vector(rng, kDim));
  const ReplacementSet set(std::move(reps));
  AttributionConfig cfg;
  cfg.method = AttrMethod::kSOC;
  cfg.delta = static_cast<int>(state.range(0));
  cfg.n_samples = 20;
  for (auto _ : state) benchmark::DoNotOptimize(soc_importance(m, X, Vector::Zero(kDim), {6, 8}, 1, cfg, &set, 0));
}
BENCHMARK(BM_SocImportance)->ArgName("delta")->Arg(0)->Arg(3);

void BM_TotalLossWithGradient(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, kDim, kHidden, 2);
  std::vector<TrainingExample> batch(16);
  for (int i = 0; i < 16; ++i) {
    batch[i].X = fixtures::random_matrix(rng, 12, kDim);
    batch[i].baseline = Vector::Zero(kDim);
    batch[i].label = i % 2;
    batch[i].advice.push_back({AdviceAtom::Kind::kAttribution, {2, 3}, {}, 1, 0.0});
  }
  std::vector<const TrainingExample*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  LossConfig cfg;
  cfg.alpha = 1.0;
  cfg.attr.method = state.range(0) ? AttrMethod::kIG : AttrMethod::kSOC;
  cfg.attr.delta = 0;
  cfg.attr.ig_steps = 16;
  for (auto _ : state) {
    ModelState g = m.zeros_like();
    benchmark::DoNotOptimize(total_loss(m, ptrs, cfg, nullptr, nullptr, &g));
  }
}
BENCHMARK(BM_TotalLossWithGradient)->ArgName("ig")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
