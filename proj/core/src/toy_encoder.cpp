#include "advqdet/toy_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "advqdet/errors.hpp"

namespace advqdet {

namespace {

struct PoolLayout {
  int cell_rows;
  int cell_cols;
  int channels;
  std::size_t dim() const {
    return static_cast<std::size_t>(cell_rows) * cell_cols * channels;
  }
};

PoolLayout layout_for(const Geometry& g, int pool) {
  return {(g.height + pool - 1) / pool, (g.width + pool - 1) / pool, g.channels};
}

}  // namespace

ToyFeatureEncoder::ToyFeatureEncoder(int pool, double gain, Precision precision)
    : pool_(pool), gain_(gain), precision_(precision) {
  if (pool_ < 1) throw ConfigError("toy encoder pool must be >= 1");
  if (!(gain_ > 0.0)) throw ConfigError("toy encoder gain must be positive");
}

std::size_t ToyFeatureEncoder::feature_dim(const Geometry& geometry) const {
  return layout_for(geometry, pool_).dim();
}

std::vector<float> ToyFeatureEncoder::features(const ImageTensor& image) const {
  const auto& g = image.geometry();
  const PoolLayout L = layout_for(g, pool_);
  std::vector<double> sums(L.dim(), 0.0);
  std::vector<int> counts(L.dim(), 0);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const std::size_t cell = (static_cast<std::size_t>(r / pool_) * L.cell_cols + c / pool_) * L.channels;
      for (int ch = 0; ch < g.channels; ++ch) {
        sums[cell + ch] += image.at(r, c, ch);
        counts[cell + ch] += 1;
      }
    }
  }
  std::vector<float> out(L.dim());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = static_cast<float>(gain_ * (sums[k] / counts[k] - 0.5));
  }
  return out;
}

Fingerprint ToyFeatureEncoder::encode(const ImageTensor& image) const {
  const auto f = features(image);
  return DenseEmbedding(f, precision_);
}

ToyFeatureEncoder::CosineGradient ToyFeatureEncoder::cosine_and_gradient(
    const ImageTensor& image, std::span<const float> reference) const {
  const auto& g = image.geometry();
  const PoolLayout L = layout_for(g, pool_);
  require(reference.size() == L.dim(), "cosine_and_gradient: reference dimension mismatch");
  const auto f = features(image);

  double dot = 0.0, ff = 0.0, rr = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    dot += static_cast<double>(f[k]) * reference[k];
    ff += static_cast<double>(f[k]) * f[k];
    rr += static_cast<double>(reference[k]) * reference[k];
  }
  const double nf = std::sqrt(ff);
  const double nr = std::sqrt(rr);
  if (!(nf > 0.0) || !(nr > 0.0)) throw DegenerateInput("zero feature vector");

  CosineGradient out;
  out.cosine = dot / (nf * nr);
  std::vector<double> dfeat(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    dfeat[k] = reference[k] / (nf * nr) - out.cosine * f[k] / ff;
  }

  std::vector<int> counts(L.dim(), 0);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const std::size_t cell = (static_cast<std::size_t>(r / pool_) * L.cell_cols + c / pool_) * L.channels;
      for (int ch = 0; ch < g.channels; ++ch) counts[cell + ch] += 1;
    }
  }
  out.gradient.assign(g.size(), 0.0);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const std::size_t cell = (static_cast<std::size_t>(r / pool_) * L.cell_cols + c / pool_) * L.channels;
      for (int ch = 0; ch < g.channels; ++ch) {
        const std::size_t pix = (static_cast<std::size_t>(r) * g.width + c) * g.channels + ch;
        out.gradient[pix] = dfeat[cell + ch] * gain_ / counts[cell + ch];
      }
    }
  }
  return out;
}

}  // namespace advqdet
