#include "probekit/detectors.hpp"
#include "probekit/optim.hpp"
#include "probekit/pca.hpp"
#include "probekit/probes.hpp"
#include "probekit/random.hpp"
#include "probekit/synth.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace probekit;

ActivationDataset bench_data(int d_model, std::int64_t n, double error_rate = 0.0) {
  SyntheticSpec spec;
  spec.d_model = d_model;
  spec.n_records = n;
  spec.error_rate = error_rate;
  spec.seed = 1;
  return generate(spec);
}

CircularProbe random_plane(int d, Rng& rng) {
  CircularProbe p{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (int i = 0; i < d; ++i) {
    p.w1[i] = rng.normal();
    p.w2[i] = rng.normal();
  }
  return p;
}

// One full-batch loss and gradient of the circular probe.
void BM_CircularObjective(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const ActivationDataset ds = bench_data(d, 800);
  const Eigen::MatrixXd x = ds.layer_matrix(0);
  const std::vector<int> y = ds.digits(DigitTarget::model_digit);
  Rng rng(2);
  const CircularProbe probe = random_plane(d, rng);
  CircularProbe grad = probe;
  for (auto _ : state) {
    benchmark::DoNotOptimize(circular_objective(probe, x, y, CircularLoss::wrapped, &grad));
  }
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_CircularObjective)->Arg(64)->Arg(256)->Arg(2304);

void BM_MlpObjective(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const ActivationDataset ds = bench_data(d, 800);
  const Eigen::MatrixXd x = ds.layer_matrix(0);
  const std::vector<int> y = ds.digits(DigitTarget::model_digit);
  MlpProbe probe = MlpProbe::zeros(d, kDigitClasses);
  probe.w1.setRandom();
  probe.w2.setRandom();
  MlpProbe grad = probe;
  for (auto _ : state) benchmark::DoNotOptimize(mlp_objective(probe, x, y, &grad));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_MlpObjective)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_RidgeSolve(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const ActivationDataset ds = bench_data(d, 800);
  const Eigen::MatrixXd x = ds.layer_matrix(0);
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = ds.records[static_cast<std::size_t>(i)].model_digit;
  for (auto _ : state) benchmark::DoNotOptimize(ridge_solve(x, y, 0.1));
}
BENCHMARK(BM_RidgeSolve)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  const auto n = state.range(0);
  AdamState adam(n);
  Eigen::VectorXd params = Eigen::VectorXd::Ones(n), grad = Eigen::VectorXd::Constant(n, 0.1);
  const OptimizerConfig cfg = OptimizerConfig::adamw();
  for (auto _ : state) {
    optimizer_step(adam, params, grad, cfg);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AdamStep)->Arg(1 << 10)->Arg(1 << 17);

void BM_PcaCovariance(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = bench_data(d, 800).layer_matrix(0);
  for (auto _ : state) benchmark::DoNotOptimize(pca_fit_matrix(x, 2));
}
BENCHMARK(BM_PcaCovariance)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_PcaGram(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = bench_data(d, 400).layer_matrix(0);
  for (auto _ : state) benchmark::DoNotOptimize(pca_fit_matrix(x, 2, 0));
}
BENCHMARK(BM_PcaGram)->Arg(2304)->Unit(benchmark::kMillisecond);

void BM_DetectSeparateBatch(benchmark::State& state) {
  const int d = 64;
  const ActivationDataset ds = bench_data(d, 800, 0.5);
  const Eigen::MatrixXd x = ds.layer_matrix(0);
  Rng rng(3);
  ErrorDetector detector;
  detector.components = SeparateProbes{random_plane(d, rng), random_plane(d, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(detect_batch(detector, x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_DetectSeparateBatch);

void BM_Generate(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(bench_data(64, state.range(0), 0.5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Generate)->Arg(800)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
