#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "privleak/attack.hpp"
#include "privleak/eval.hpp"
#include "privleak/lm.hpp"

namespace {

using namespace privleak;

ModelState bench_model(std::size_t vocab) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.init_seed = 7;
  return init_model(cfg);
}

std::vector<TokenSeq> bench_batch(std::size_t n, std::size_t len, std::size_t vocab) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<TokenId> pick(3, static_cast<TokenId>(vocab - 1));
  std::vector<TokenSeq> out(n);
  for (auto& s : out) {
    s.push_back(Vocab::kBos);
    for (std::size_t i = 0; i < len; ++i) s.push_back(pick(rng));
    s.push_back(Vocab::kEos);
  }
  return out;
}

void BM_ForwardLoss(benchmark::State& state) {
  const auto model = bench_model(64);
  const auto batch = bench_batch(32, static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(forward_loss(model, batch).mean_nll);
  state.SetItemsProcessed(state.iterations() * 32 * state.range(0));
}
BENCHMARK(BM_ForwardLoss)->Arg(16)->Arg(64);

void BM_ForwardBackward(benchmark::State& state) {
  const auto model = bench_model(64);
  const auto batch = bench_batch(32, static_cast<std::size_t>(state.range(0)), 64);
  ForwardCache cache;
  for (auto _ : state) {
    forward_loss(model, batch, &cache);
    benchmark::DoNotOptimize(backward(model, cache));
  }
  state.SetItemsProcessed(state.iterations() * 32 * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64);

void BM_PerSampleGradients(benchmark::State& state) {
  const auto model = bench_model(64);
  const auto batch = bench_batch(32, 32, 64);
  for (auto _ : state) benchmark::DoNotOptimize(per_sample_gradients(model, batch));
}
BENCHMARK(BM_PerSampleGradients);

void BM_Auc(benchmark::State& state) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> d;
  std::vector<AttackScore> scores(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i].score = d(rng);
    scores[i].is_member = i % 10 == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(scores).auc);
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_CompressedLen(benchmark::State& state) {
  const std::string text =
      "Hi Dana, call me at 713-555-0147 about the quarterly gas contracts. Thanks";
  for (auto _ : state) benchmark::DoNotOptimize(compressed_len(text));
}
BENCHMARK(BM_CompressedLen);

}  // namespace
BENCHMARK_MAIN();
