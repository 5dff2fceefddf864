#include "advqdet/fingerprint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "advqdet/errors.hpp"
#include "advqdet/half.hpp"

namespace advqdet {

std::size_t bytes_per_value(Precision p) { return p == Precision::single ? 4 : 2; }

DenseEmbedding::DenseEmbedding(std::span<const float> raw, Precision precision)
    : dim_(raw.size()), precision_(precision) {
  if (raw.empty()) throw ContractViolation("embedding dimension must be positive");
  double sq = 0.0;
  for (float v : raw) {
    if (!std::isfinite(v)) throw ContractViolation("embedding contains a non-finite value");
    sq += static_cast<double>(v) * v;
  }
  magnitude_ = std::sqrt(sq);
  if (!(magnitude_ > 0.0)) throw DegenerateInput("cannot normalize a zero embedding");

  std::vector<float> unit(dim_);
  for (std::size_t i = 0; i < dim_; ++i) unit[i] = static_cast<float>(raw[i] / magnitude_);

  if (precision_ == Precision::single) {
    single_ = std::move(unit);
  } else {
    half_.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) half_[i] = float_to_half(unit[i]);
  }

  double n2 = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double v = value(i);
    n2 += v * v;
  }
  norm_ = std::sqrt(n2);
}

float DenseEmbedding::value(std::size_t i) const {
  return precision_ == Precision::single ? single_[i] : half_to_float(half_[i]);
}

std::vector<float> DenseEmbedding::values() const {
  if (precision_ == Precision::single) return single_;
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = half_to_float(half_[i]);
  return out;
}

std::vector<float> DenseEmbedding::raw_values() const {
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    out[i] = static_cast<float>(static_cast<double>(value(i)) * magnitude_);
  }
  return out;
}

HashSignature HashSignature::window(std::vector<std::uint64_t> entries, std::size_t budget) {
  if (budget == 0) throw ContractViolation("signature budget must be positive");
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
  if (entries.empty()) throw ContractViolation("window-hash signature must be non-empty");
  if (entries.size() > budget) throw ContractViolation("window-hash signature exceeds budget");
  HashSignature s;
  s.kind_ = HashKind::window_hash;
  s.entries_ = std::move(entries);
  s.budget_ = budget;
  return s;
}

HashSignature HashSignature::bits(const std::vector<bool>& bits) {
  if (bits.empty()) throw ContractViolation("perceptual signature must have at least one bit");
  HashSignature s;
  s.kind_ = HashKind::perceptual_bits;
  s.bit_length_ = bits.size();
  s.words_.assign((bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) s.words_[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  return s;
}

FingerprintKind kind_of(const Fingerprint& f) {
  if (std::holds_alternative<DenseEmbedding>(f)) return FingerprintKind::dense;
  return std::get<HashSignature>(f).kind() == HashKind::window_hash
             ? FingerprintKind::window_hash
             : FingerprintKind::perceptual_bits;
}

std::string_view to_string(FingerprintKind k) {
  switch (k) {
    case FingerprintKind::dense: return "dense";
    case FingerprintKind::window_hash: return "window-hash";
    case FingerprintKind::perceptual_bits: return "perceptual-bits";
  }
  return "unknown";
}

namespace detail {

double dot_promoted(const std::uint16_t* a, const std::uint16_t* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += static_cast<double>(half_to_float(a[i])) * static_cast<double>(half_to_float(b[i]));
  }
  return s;
}

double dense_dot(const DenseEmbedding& a, const DenseEmbedding& b) {
  const std::size_t n = a.dim();
  if (a.precision() == Precision::single && b.precision() == Precision::single) {
    return dot_promoted(a.single_values().data(), b.single_values().data(), n);
  }
  if (a.precision() == Precision::half && b.precision() == Precision::half) {
    return dot_promoted(a.half_values().data(), b.half_values().data(), n);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += static_cast<double>(a.value(i)) * static_cast<double>(b.value(i));
  }
  return s;
}

}  // namespace detail

double cosine_similarity(const DenseEmbedding& a, const DenseEmbedding& b) {
  if (a.dim() != b.dim()) {
    throw ContractViolation("cosine_similarity: dimension mismatch " + std::to_string(a.dim()) +
                            " vs " + std::to_string(b.dim()));
  }
  return detail::cosine_from(detail::dense_dot(a, b), a.norm(), b.norm());
}

double hash_similarity(const HashSignature& a, const HashSignature& b) {
  if (a.kind() != b.kind()) throw ContractViolation("hash_similarity: signature kind mismatch");
  if (a.kind() == HashKind::window_hash) {
    auto ea = a.entries();
    auto eb = b.entries();
    std::size_t i = 0, j = 0, common = 0;
    while (i < ea.size() && j < eb.size()) {
      if (ea[i] < eb[j]) {
        ++i;
      } else if (eb[j] < ea[i]) {
        ++j;
      } else {
        ++common;
        ++i;
        ++j;
      }
    }
    const std::size_t denom = std::max(ea.size(), eb.size());
    return static_cast<double>(common) / static_cast<double>(denom);
  }
  if (a.bit_length() != b.bit_length()) {
    throw ContractViolation("hash_similarity: perceptual bit lengths differ");
  }
  std::size_t hamming = 0;
  auto wa = a.words();
  auto wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) hamming += std::popcount(wa[i] ^ wb[i]);
  return 1.0 - static_cast<double>(hamming) / static_cast<double>(a.bit_length());
}

double similarity(const Fingerprint& a, const Fingerprint& b) {
  if (kind_of(a) != kind_of(b)) throw ContractViolation("similarity: fingerprint kind mismatch");
  if (const auto* da = std::get_if<DenseEmbedding>(&a)) {
    return cosine_similarity(*da, std::get<DenseEmbedding>(b));
  }
  return hash_similarity(std::get<HashSignature>(a), std::get<HashSignature>(b));
}

}  // namespace advqdet
