#pragma once

#include <span>
#include <vector>

#include "advqdet/encoders.hpp"

namespace advqdet {

// Fixed low-pass feature map: per-channel average pooling over pool x pool
// cells (partial edge cells average what they cover), centred at 0.5 and
// scaled by `gain`. Differentiable, so it doubles as the encoder-gradient
// oracle for white-box adaptive attacks. The same map can be served to other
// processes over the embedding round-trip protocol.
class ToyFeatureEncoder final : public Encoder {
 public:
  explicit ToyFeatureEncoder(int pool = 8, double gain = 15.0,
                             Precision precision = Precision::single);

  FingerprintKind kind() const override { return FingerprintKind::dense; }
  Fingerprint encode(const ImageTensor& image) const override;

  std::vector<float> features(const ImageTensor& image) const;
  std::size_t feature_dim(const Geometry& geometry) const;

  struct CosineGradient {
    double cosine = 0.0;
    std::vector<double> gradient;  // d cos / d pixel, image layout
  };
  // cos(features(image), reference) and its gradient with respect to the pixels.
  CosineGradient cosine_and_gradient(const ImageTensor& image,
                                     std::span<const float> reference) const;

  int pool() const { return pool_; }
  double gain() const { return gain_; }

 private:
  int pool_;
  double gain_;
  Precision precision_;
};

}  // namespace advqdet
