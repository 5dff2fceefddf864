#include "advqdet/target_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"

namespace advqdet {

namespace {

constexpr std::uint32_t kModelFileVersion = 1;

}  // namespace

std::vector<std::uint8_t> serialize_output(const ModelOutput& out) {
  ByteWriter w;
  w.i32(out.label);
  w.u32(static_cast<std::uint32_t>(out.probs.size()));
  for (double p : out.probs) w.f64(p);
  return w.take();
}

ModelOutput deserialize_output(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ModelOutput out;
  out.label = r.i32();
  const auto n = r.u32();
  if (n > r.remaining() / 8) throw FormatError("model output probability count exceeds payload");
  out.probs.resize(n);
  for (auto& p : out.probs) p = r.f64();
  return out;
}

std::string_view to_string(ModelKind k) {
  return k == ModelKind::softmax_linear ? "softmax-linear" : "mlp-1-hidden";
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

int argmax_smallest(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

TargetModel TargetModel::softmax_linear(Geometry geometry, int num_classes,
                                        std::vector<double> weights, std::vector<double> bias) {
  validate_geometry(geometry);
  require(num_classes >= 2, "target model needs at least two classes");
  require(weights.size() == static_cast<std::size_t>(num_classes) * geometry.size(),
          "softmax-linear weight shape mismatch");
  require(bias.size() == static_cast<std::size_t>(num_classes), "softmax-linear bias shape mismatch");
  TargetModel m;
  m.kind_ = ModelKind::softmax_linear;
  m.geometry_ = geometry;
  m.num_classes_ = num_classes;
  m.w1_ = std::move(weights);
  m.b1_ = std::move(bias);
  return m;
}

TargetModel TargetModel::mlp(Geometry geometry, int num_classes, int hidden, std::vector<double> w1,
                             std::vector<double> b1, std::vector<double> w2, std::vector<double> b2) {
  validate_geometry(geometry);
  require(num_classes >= 2, "target model needs at least two classes");
  require(hidden >= 1, "mlp hidden width must be positive");
  const auto H = static_cast<std::size_t>(hidden);
  const auto C = static_cast<std::size_t>(num_classes);
  require(w1.size() == H * geometry.size() && b1.size() == H, "mlp hidden layer shape mismatch");
  require(w2.size() == C * H && b2.size() == C, "mlp output layer shape mismatch");
  TargetModel m;
  m.kind_ = ModelKind::mlp_one_hidden;
  m.geometry_ = geometry;
  m.num_classes_ = num_classes;
  m.hidden_ = hidden;
  m.w1_ = std::move(w1);
  m.b1_ = std::move(b1);
  m.w2_ = std::move(w2);
  m.b2_ = std::move(b2);
  return m;
}

TargetModel TargetModel::seeded(ModelKind kind, Geometry geometry, int num_classes,
                                std::uint64_t seed, int hidden, double scale) {
  validate_geometry(geometry);
  std::mt19937_64 rng(seed);
  const std::size_t D = geometry.size();
  auto draw = [&](std::size_t n, std::size_t fan_in) {
    std::normal_distribution<double> nd(0.0, scale / std::sqrt(static_cast<double>(fan_in)));
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
  };
  if (kind == ModelKind::softmax_linear) {
    auto w = draw(static_cast<std::size_t>(num_classes) * D, D);
    auto b = draw(static_cast<std::size_t>(num_classes), D);
    return softmax_linear(geometry, num_classes, std::move(w), std::move(b));
  }
  const auto H = static_cast<std::size_t>(hidden);
  auto w1 = draw(H * D, D);
  auto b1 = draw(H, D);
  auto w2 = draw(static_cast<std::size_t>(num_classes) * H, H);
  auto b2 = draw(static_cast<std::size_t>(num_classes), H);
  return mlp(geometry, num_classes, hidden, std::move(w1), std::move(b1), std::move(w2),
             std::move(b2));
}

void TargetModel::check_input(const ImageTensor& x) const {
  if (!(x.geometry() == geometry_)) throw ContractViolation("input geometry does not match model");
}

std::vector<double> TargetModel::logits(const ImageTensor& x) const {
  check_input(x);
  const auto in = x.data();
  const std::size_t D = in.size();
  auto affine = [D, &in](const std::vector<double>& w, const std::vector<double>& b, std::size_t rows) {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = w.data() + r * D;
      double s = b[r];
      for (std::size_t i = 0; i < D; ++i) s += row[i] * in[i];
      out[r] = s;
    }
    return out;
  };
  const auto C = static_cast<std::size_t>(num_classes_);
  if (kind_ == ModelKind::softmax_linear) return affine(w1_, b1_, C);

  const auto H = static_cast<std::size_t>(hidden_);
  auto h = affine(w1_, b1_, H);
  for (auto& v : h) v = std::tanh(v);
  std::vector<double> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = b2_[c];
    for (std::size_t j = 0; j < H; ++j) s += w2_[c * H + j] * h[j];
    out[c] = s;
  }
  return out;
}

std::vector<double> TargetModel::predict_proba(const ImageTensor& x) const {
  return softmax(logits(x));
}

int TargetModel::predict_label(const ImageTensor& x) const {
  return argmax_smallest(predict_proba(x));
}

ModelOutput TargetModel::predict(const ImageTensor& x) const {
  ModelOutput out;
  out.probs = predict_proba(x);
  out.label = argmax_smallest(out.probs);
  return out;
}

LossGradient TargetModel::loss_and_grad(const ImageTensor& x, int label) const {
  require(label >= 0 && label < num_classes_, "loss_and_grad: label out of range");
  check_input(x);
  const auto in = x.data();
  const std::size_t D = in.size();
  const auto C = static_cast<std::size_t>(num_classes_);

  LossGradient out;
  out.gradient.assign(D, 0.0);

  if (kind_ == ModelKind::softmax_linear) {
    const auto z = logits(x);
    const auto p = softmax(z);
    const double m = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - m);
    out.loss = std::log(lse) + m - z[static_cast<std::size_t>(label)];
    for (std::size_t c = 0; c < C; ++c) {
      const double coef = p[c] - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0);
      const double* row = w1_.data() + c * D;
      for (std::size_t i = 0; i < D; ++i) out.gradient[i] += coef * row[i];
    }
    return out;
  }

  const auto H = static_cast<std::size_t>(hidden_);
  std::vector<double> h(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double* row = w1_.data() + j * D;
    double s = b1_[j];
    for (std::size_t i = 0; i < D; ++i) s += row[i] * in[i];
    h[j] = std::tanh(s);
  }
  std::vector<double> z(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = b2_[c];
    for (std::size_t j = 0; j < H; ++j) s += w2_[c * H + j] * h[j];
    z[c] = s;
  }
  const auto p = softmax(z);
  const double m = *std::max_element(z.begin(), z.end());
  double lse = 0.0;
  for (double v : z) lse += std::exp(v - m);
  out.loss = std::log(lse) + m - z[static_cast<std::size_t>(label)];

  std::vector<double> dh(H, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double coef = p[c] - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0);
    for (std::size_t j = 0; j < H; ++j) dh[j] += coef * w2_[c * H + j];
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double da = dh[j] * (1.0 - h[j] * h[j]);
    const double* row = w1_.data() + j * D;
    for (std::size_t i = 0; i < D; ++i) out.gradient[i] += da * row[i];
  }
  return out;
}

std::vector<std::uint8_t> TargetModel::serialize() const {
  ByteWriter w;
  w.str("AQTM");
  w.u32(kModelFileVersion);
  w.u8(static_cast<std::uint8_t>(kind_));
  w.u32(static_cast<std::uint32_t>(geometry_.height));
  w.u32(static_cast<std::uint32_t>(geometry_.width));
  w.u8(static_cast<std::uint8_t>(geometry_.channels));
  w.u32(static_cast<std::uint32_t>(num_classes_));
  w.u32(static_cast<std::uint32_t>(hidden_));
  auto put = [&w](const std::vector<double>& v) {
    for (double x : v) w.f32(static_cast<float>(x));
  };
  put(w1_);
  put(b1_);
  if (kind_ == ModelKind::mlp_one_hidden) {
    put(w2_);
    put(b2_);
  }
  return w.take();
}

TargetModel TargetModel::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "AQTM") throw FormatError("bad magic: not an AQTM model file");
  if (r.u32() != kModelFileVersion) throw FormatError("unsupported AQTM version");
  const auto kind = r.u8();
  if (kind > 1) throw FormatError("unknown AQTM model kind");
  Geometry g;
  g.height = static_cast<int>(r.u32());
  g.width = static_cast<int>(r.u32());
  g.channels = r.u8();
  const int classes = static_cast<int>(r.u32());
  const int hidden = static_cast<int>(r.u32());
  auto take = [&r](std::size_t n) {
    if (n > r.remaining() / 4) throw FormatError("AQTM weights truncated");
    std::vector<double> v(n);
    for (auto& x : v) x = r.f32();
    return v;
  };
  const std::size_t D = g.size();
  const auto C = static_cast<std::size_t>(classes);
  TargetModel m;
  if (kind == 0) {
    auto w = take(C * D);
    auto b = take(C);
    m = softmax_linear(g, classes, std::move(w), std::move(b));
  } else {
    const auto H = static_cast<std::size_t>(hidden);
    auto w1 = take(H * D);
    auto b1 = take(H);
    auto w2 = take(C * H);
    auto b2 = take(C);
    m = mlp(g, classes, hidden, std::move(w1), std::move(b1), std::move(w2), std::move(b2));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in AQTM file");
  return m;
}

void TargetModel::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

TargetModel TargetModel::load(const std::filesystem::path& path) {
  return deserialize(read_file_bytes(path));
}

}  // namespace advqdet
