// Compares the serial reference kernels against the OpenMP paths, and the
// per-sample training step against its single-worker equivalent.

#include <chrono>
#include <cstdio>
#include <vector>

#include "core/kernels.hpp"
#include "core/rng.hpp"
#include "model/policy.hpp"
#include "pipeline/config.hpp"
#include "pipeline/train.hpp"
#include "tasks/tasks.hpp"

using namespace mmp;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void bench_matmul(int m, int n, int k, int reps) {
  core::Rng rng(1);
  std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n), c(static_cast<size_t>(m) * n);
  for (auto& v : a) v = static_cast<float>(rng.next_normal());
  for (auto& v : b) v = static_cast<float>(rng.next_normal());

  const double flops = 2.0 * m * n * k * reps;

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) core::kernels::matmul_serial(a.data(), b.data(), c.data(), m, n, k, false, false, false);
  const double serial = seconds_since(t0);

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) core::kernels::matmul(a.data(), b.data(), c.data(), m, n, k, false, false, false);
  const double parallel = seconds_since(t0);

  std::printf("matmul %4dx%4dx%4d  serial %7.1f ms (%5.2f GF/s)  openmp %7.1f ms (%5.2f GF/s)  speedup %.2fx\n", m, n,
              k, serial * 1e3, flops / serial * 1e-9, parallel * 1e3, flops / parallel * 1e-9, serial / parallel);
}

void bench_training_step(int threads) {
  core::kernels::set_threads(threads);

  pipeline::KeyValueFile kv;
  kv.set("data.demos_per_task", "16");
  kv.set("train.batch_size", "16");
  kv.set("pretrain.epochs", "1");
  auto cfg = pipeline::TrainConfig::from_file(kv);

  const auto shard = pipeline::generate_dataset(cfg);
  auto policy = pipeline::make_policy(cfg, model::Vocabulary::standard());

  const auto t0 = Clock::now();
  const auto res = pipeline::run_pretrain(policy, cfg, shard);
  const double secs = seconds_since(t0);
  std::printf("training step (batch %d, d=%d, %d layers) x%lld steps: %6.2f s  (%5.1f ms/sample)  [%d threads]\n",
              cfg.batch_size, cfg.policy.d, cfg.policy.layers, static_cast<long long>(res.steps), secs,
              1e3 * secs / static_cast<double>(res.steps * cfg.batch_size), threads);
}

}  // namespace

int main() {
  const int hw_threads = core::kernels::max_threads();
  std::printf("max threads: %d\n\n", hw_threads);

  bench_matmul(64, 64, 64, 2000);
  bench_matmul(128, 128, 128, 500);
  bench_matmul(256, 256, 256, 100);
  bench_matmul(48, 256, 64, 1000);

  std::printf("\n");
  bench_training_step(1);
  bench_training_step(hw_threads);
  return 0;
}
