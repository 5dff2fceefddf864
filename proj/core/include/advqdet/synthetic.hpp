#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "advqdet/image.hpp"
#include "advqdet/target_model.hpp"

namespace advqdet {

// Class-conditional image distribution:
//   x = clamp(0.5 + pattern_y + field + noise)
// pattern_y is +-amplitude on pattern_block squares, balanced to sum to zero
// inside every field cell; field is one N(0, field_sigma^2) value per
// field_cell square and channel; noise is i.i.d. per pixel.
struct SyntheticTaskConfig {
  Geometry geometry{40, 40, 3};
  int num_classes = 10;
  int pattern_block = 2;
  double pattern_amplitude = 0.02;
  int field_cell = 4;
  double field_sigma = 0.3;
  double pixel_noise = 0.02;
  double logit_scale = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledImage {
  ImageTensor image;
  int label = 0;
};

class SyntheticTask {
 public:
  explicit SyntheticTask(SyntheticTaskConfig cfg);

  const SyntheticTaskConfig& config() const { return cfg_; }
  const std::vector<double>& pattern(int label) const { return patterns_[static_cast<std::size_t>(label)]; }

  ImageTensor sample_class(int label, std::mt19937_64& rng) const;
  LabeledImage sample(std::mt19937_64& rng) const;
  // Draws until the victim classifies the sample correctly (at most 1000 tries).
  LabeledImage sample_correct(const TargetModel& victim, std::mt19937_64& rng) const;

  // Matched-filter softmax-linear victim: logit_c = logit_scale * <pattern_c, x - 0.5>.
  TargetModel victim() const;

 private:
  SyntheticTaskConfig cfg_;
  std::vector<std::vector<double>> patterns_;
};

}  // namespace advqdet
