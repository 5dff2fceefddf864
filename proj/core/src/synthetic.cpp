#include "advqdet/synthetic.hpp"

#include <algorithm>
#include <array>

#include "advqdet/errors.hpp"

namespace advqdet {

void SyntheticTaskConfig::validate() const {
  validate_geometry(geometry);
  if (num_classes < 2) throw ConfigError("task needs at least two classes");
  if (pattern_block < 1 || field_cell < 1) throw ConfigError("block sizes must be positive");
  if (field_cell % pattern_block != 0 || (field_cell / pattern_block) % 2 != 0) {
    throw ConfigError("field_cell must be an even multiple of pattern_block");
  }
  if (geometry.height % field_cell != 0 || geometry.width % field_cell != 0) {
    throw ConfigError("image sides must be multiples of field_cell");
  }
  if (pattern_amplitude < 0 || field_sigma < 0 || pixel_noise < 0) {
    throw ConfigError("task amplitudes must be non-negative");
  }
}

SyntheticTask::SyntheticTask(SyntheticTaskConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& g = cfg_.geometry;
  const int per_cell = cfg_.field_cell / cfg_.pattern_block;
  const int blocks = per_cell * per_cell;
  std::mt19937_64 rng(cfg_.seed ^ 0x5eed0f7a5c00ffeeULL);

  patterns_.assign(static_cast<std::size_t>(cfg_.num_classes), std::vector<double>(g.size(), 0.0));
  std::vector<int> signs(static_cast<std::size_t>(blocks));
  for (auto& pat : patterns_) {
    for (int cr = 0; cr < g.height / cfg_.field_cell; ++cr) {
      for (int cc = 0; cc < g.width / cfg_.field_cell; ++cc) {
        for (int ch = 0; ch < g.channels; ++ch) {
          for (int b = 0; b < blocks; ++b) signs[static_cast<std::size_t>(b)] = b < blocks / 2 ? 1 : -1;
          std::shuffle(signs.begin(), signs.end(), rng);
          for (int b = 0; b < blocks; ++b) {
            const int r0 = cr * cfg_.field_cell + (b / per_cell) * cfg_.pattern_block;
            const int c0 = cc * cfg_.field_cell + (b % per_cell) * cfg_.pattern_block;
            const double v = cfg_.pattern_amplitude * signs[static_cast<std::size_t>(b)];
            for (int r = r0; r < r0 + cfg_.pattern_block; ++r) {
              for (int c = c0; c < c0 + cfg_.pattern_block; ++c) {
                pat[(static_cast<std::size_t>(r) * g.width + c) * g.channels + ch] = v;
              }
            }
          }
        }
      }
    }
  }
}

ImageTensor SyntheticTask::sample_class(int label, std::mt19937_64& rng) const {
  require(label >= 0 && label < cfg_.num_classes, "sample_class: label out of range");
  const auto& g = cfg_.geometry;
  const int rows = g.height / cfg_.field_cell;
  const int cols = g.width / cfg_.field_cell;
  std::normal_distribution<double> nd(0.0, 1.0);

  std::vector<double> field(static_cast<std::size_t>(rows * cols * g.channels));
  for (auto& f : field) f = cfg_.field_sigma * nd(rng);

  const auto& pat = patterns_[static_cast<std::size_t>(label)];
  std::vector<float> px(g.size());
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      for (int ch = 0; ch < g.channels; ++ch) {
        const std::size_t i = (static_cast<std::size_t>(r) * g.width + c) * g.channels + ch;
        const double f = field[(static_cast<std::size_t>(r / cfg_.field_cell) * cols +
                                static_cast<std::size_t>(c / cfg_.field_cell)) * g.channels + ch];
        px[i] = static_cast<float>(0.5 + pat[i] + f + cfg_.pixel_noise * nd(rng));
      }
    }
  }
  return ImageTensor::clamped(g, px);
}

LabeledImage SyntheticTask::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> cls(0, cfg_.num_classes - 1);
  const int label = cls(rng);
  return {sample_class(label, rng), label};
}

LabeledImage SyntheticTask::sample_correct(const TargetModel& victim, std::mt19937_64& rng) const {
  for (int i = 0; i < 1000; ++i) {
    auto s = sample(rng);
    if (victim.predict_label(s.image) == s.label) return s;
  }
  throw DegenerateInput("victim misclassifies 1000 consecutive samples");
}

TargetModel SyntheticTask::victim() const {
  const auto D = cfg_.geometry.size();
  const auto C = static_cast<std::size_t>(cfg_.num_classes);
  std::vector<double> w(C * D);
  std::vector<double> b(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      w[c * D + i] = cfg_.logit_scale * patterns_[c][i];
      s += w[c * D + i];
    }
    b[c] = -0.5 * s;
  }
  return TargetModel::softmax_linear(cfg_.geometry, cfg_.num_classes, std::move(w), std::move(b));
}

}  // namespace advqdet
