#include <random>
#include <string>

#include "advqdet/bank.hpp"
#include "advqdet/encoders.hpp"
#include "benchmark/benchmark.h"

using namespace advqdet;

namespace {

DenseEmbedding random_embedding(std::mt19937_64& rng, std::size_t dim, Precision p) {
  std::normal_distribution<float> n;
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return DenseEmbedding(v, p);
}

HashSignature random_signature(std::mt19937_64& rng, std::size_t budget) {
  std::vector<std::uint64_t> e(budget);
  for (auto& x : e) x = rng() >> 40;  // narrow range so signatures overlap
  return HashSignature::window(std::move(e), budget);
}

void BM_dense_search(benchmark::State& state) {
  const auto entries = static_cast<std::size_t>(state.range(0));
  const auto p = state.range(1) == 0 ? Precision::single : Precision::half;
  std::mt19937_64 rng(7);
  BankConfig cfg;
  cfg.precision = p;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  for (std::size_t i = 0; i < entries; ++i) {
    bank.append(BankEntry{random_embedding(rng, 512, p), "u", i, std::nullopt, 0, {}});
  }
  const Fingerprint probe = random_embedding(rng, 512, p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bank.search_max(probe).score);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(entries));
}
BENCHMARK(BM_dense_search)->ArgsProduct({{1000, 10000}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_hash_search(benchmark::State& state) {
  const auto entries = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(11);
  EmbeddingBank bank(FingerprintKind::window_hash, BankConfig{});
  for (std::size_t i = 0; i < entries; ++i) {
    bank.append(BankEntry{random_signature(rng, 50), "u", i, std::nullopt, 0, {}});
  }
  const Fingerprint probe = random_signature(rng, 50);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bank.search_max(probe).score);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(entries));
}
BENCHMARK(BM_hash_search)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_knn_distance(benchmark::State& state) {
  std::mt19937_64 rng(3);
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  for (std::size_t i = 0; i < 5000; ++i) {
    bank.append(BankEntry{random_embedding(rng, 75, Precision::single), "u" + std::to_string(i % 10),
                          i, std::nullopt, 0, {}});
  }
  const auto probe = random_embedding(rng, 75, Precision::single);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bank.knn_mean_distance(probe, 50, "u3"));
  }
}
BENCHMARK(BM_knn_distance)->Unit(benchmark::kMicrosecond);

}  // namespace
