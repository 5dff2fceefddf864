#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "advqdet/image.hpp"

namespace advqdet {

// What the victim returns for one query. Score-based oracles fill `probs`;
// decision-based consumers read only `label`.
struct ModelOutput {
  std::vector<double> probs;
  int label = 0;

  bool has_probs() const { return !probs.empty(); }
  bool operator==(const ModelOutput&) const = default;
};

std::vector<std::uint8_t> serialize_output(const ModelOutput& out);
ModelOutput deserialize_output(std::span<const std::uint8_t> bytes);

enum class ModelKind : std::uint8_t { softmax_linear = 0, mlp_one_hidden = 1 };

std::string_view to_string(ModelKind k);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d pixel, image layout
};

// Deterministic toy classifier over flattened images. Read-only after
// construction and safe for concurrent prediction.
class TargetModel {
 public:
  // weights: classes x input_dim row-major; bias: classes.
  static TargetModel softmax_linear(Geometry geometry, int num_classes, std::vector<double> weights,
                                    std::vector<double> bias);
  // One tanh hidden layer.
  static TargetModel mlp(Geometry geometry, int num_classes, int hidden, std::vector<double> w1,
                         std::vector<double> b1, std::vector<double> w2, std::vector<double> b2);
  // Gaussian weights with standard deviation `scale / sqrt(fan_in)` drawn from `seed`.
  static TargetModel seeded(ModelKind kind, Geometry geometry, int num_classes, std::uint64_t seed,
                            int hidden = 32, double scale = 1.0);

  ModelKind kind() const { return kind_; }
  const Geometry& geometry() const { return geometry_; }
  int num_classes() const { return num_classes_; }
  int hidden() const { return hidden_; }

  std::vector<double> logits(const ImageTensor& x) const;
  std::vector<double> predict_proba(const ImageTensor& x) const;
  // argmax of predict_proba, ties to the smallest class id.
  int predict_label(const ImageTensor& x) const;
  ModelOutput predict(const ImageTensor& x) const;

  // Cross-entropy of the true class and its exact input gradient.
  LossGradient loss_and_grad(const ImageTensor& x, int label) const;

  std::span<const double> weights() const { return w1_; }
  std::span<const double> bias() const { return b1_; }
  std::span<const double> output_weights() const { return w2_; }
  std::span<const double> output_bias() const { return b2_; }

  // "AQTM" | version u32 | kind u8 | height u32 | width u32 | channels u8 |
  // classes u32 | hidden u32 | f32 weights (w1, b1[, w2, b2]).
  std::vector<std::uint8_t> serialize() const;
  static TargetModel deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static TargetModel load(const std::filesystem::path& path);

 private:
  TargetModel() = default;
  void check_input(const ImageTensor& x) const;

  ModelKind kind_ = ModelKind::softmax_linear;
  Geometry geometry_;
  int num_classes_ = 0;
  int hidden_ = 0;
  // softmax-linear uses w1_/b1_ as the only layer.
  std::vector<double> w1_, b1_, w2_, b2_;
};

std::vector<double> softmax(std::span<const double> logits);
int argmax_smallest(std::span<const double> values);

}  // namespace advqdet
