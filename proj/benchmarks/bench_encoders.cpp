#include <random>

#include "advqdet/encoders.hpp"
#include "advqdet/synthetic.hpp"
#include "advqdet/toy_encoder.hpp"
#include "benchmark/benchmark.h"

using namespace advqdet;

namespace {

ImageTensor sample_image(int side) {
  SyntheticTaskConfig cfg;
  cfg.geometry = {side, side, 3};
  std::mt19937_64 rng(5);
  return SyntheticTask(cfg).sample(rng).image;
}

void BM_encode(benchmark::State& state, EncoderVariant variant) {
  const ImageTensor img = sample_image(static_cast<int>(state.range(0)));
  const auto enc = make_encoder(EncoderConfig::defaults(variant, img.geometry()));
  for (auto _ : state) {
    benchmark::DoNotOptimize(enc->encode(img));
  }
}
BENCHMARK_CAPTURE(BM_encode, pixel_hash, EncoderVariant::pixel_hash)->Arg(40)->Arg(80)
    ->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_encode, perceptual_hash, EncoderVariant::perceptual_hash)->Arg(40)->Arg(80)
    ->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_encode, toy_dense, EncoderVariant::toy_dense)->Arg(40)->Arg(80)
    ->Unit(benchmark::kMicrosecond);

void BM_toy_cosine_gradient(benchmark::State& state) {
  const ImageTensor img = sample_image(40);
  const ToyFeatureEncoder enc;
  const auto ref = enc.features(sample_image(40));
  for (auto _ : state) {
    benchmark::DoNotOptimize(enc.cosine_and_gradient(img, ref).cosine);
  }
}
BENCHMARK(BM_toy_cosine_gradient)->Unit(benchmark::kMicrosecond);

}  // namespace
