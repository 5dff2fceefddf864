#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace advqdet {

enum class Precision : std::uint8_t { single = 0, half = 1 };

std::size_t bytes_per_value(Precision p);

// Unit-norm dense encoder output. Values are normalized once at construction;
// the pre-normalization L2 norm is kept as magnitude() so distance-based
// detectors can still work in the raw feature space.
// Half precision stores 16-bit values and promotes them to float on read.
class DenseEmbedding {
 public:
  explicit DenseEmbedding(std::span<const float> raw, Precision precision = Precision::single);

  std::size_t dim() const { return dim_; }
  Precision precision() const { return precision_; }

  float value(std::size_t i) const;
  std::vector<float> values() const;
  std::vector<float> raw_values() const;

  // L2 norm of the stored (rounded) values, accumulated in double in index order.
  double norm() const { return norm_; }
  double magnitude() const { return magnitude_; }

  std::span<const float> single_values() const { return single_; }
  std::span<const std::uint16_t> half_values() const { return half_; }

 private:
  std::size_t dim_ = 0;
  Precision precision_ = Precision::single;
  std::vector<float> single_;
  std::vector<std::uint16_t> half_;
  double norm_ = 0.0;
  double magnitude_ = 0.0;
};

enum class HashKind : std::uint8_t { window_hash, perceptual_bits };

// Either a set of 64-bit window hashes (sorted, distinct) or a fixed-length bit string.
class HashSignature {
 public:
  static HashSignature window(std::vector<std::uint64_t> entries, std::size_t budget);
  static HashSignature bits(const std::vector<bool>& bits);

  HashKind kind() const { return kind_; }

  std::span<const std::uint64_t> entries() const { return entries_; }
  std::size_t budget() const { return budget_; }

  std::size_t bit_length() const { return bit_length_; }
  bool bit(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  std::span<const std::uint64_t> words() const { return words_; }

  bool operator==(const HashSignature&) const = default;

 private:
  HashSignature() = default;

  HashKind kind_ = HashKind::window_hash;
  std::vector<std::uint64_t> entries_;
  std::size_t budget_ = 0;
  std::vector<std::uint64_t> words_;
  std::size_t bit_length_ = 0;
};

using Fingerprint = std::variant<DenseEmbedding, HashSignature>;

enum class FingerprintKind : std::uint8_t { dense, window_hash, perceptual_bits };

FingerprintKind kind_of(const Fingerprint& f);
std::string_view to_string(FingerprintKind k);

// <a,b> / (|a||b|). Fixed index-order double accumulation, so the result is
// bit-identical for (a,b) and (b,a).
double cosine_similarity(const DenseEmbedding& a, const DenseEmbedding& b);

// window-hash: |A n B| / max(|A|,|B|); perceptual-bits: 1 - hamming / length.
double hash_similarity(const HashSignature& a, const HashSignature& b);

double similarity(const Fingerprint& a, const Fingerprint& b);

namespace detail {

inline double dot_promoted(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double dot_promoted(const std::uint16_t* a, const std::uint16_t* b, std::size_t n);

inline double cosine_from(double dot, double norm_a, double norm_b) {
  const double c = dot / (norm_a * norm_b);
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

double dense_dot(const DenseEmbedding& a, const DenseEmbedding& b);

}  // namespace detail

}  // namespace advqdet
