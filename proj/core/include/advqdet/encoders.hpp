#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "advqdet/fingerprint.hpp"
#include "advqdet/image.hpp"

namespace advqdet {

enum class EncoderVariant { pixel_hash, perceptual_hash, external, toy_dense };

std::string_view to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(std::string_view s);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::pixel_hash;

  // pixel-hash
  int quantization_step = 50;
  int window_size = 20;
  int window_stride = 1;
  int signature_budget = 50;

  // perceptual-hash
  int block_size = 7;

  // external: "file:<path to AQDE file>" or "exec:<command line>"
  std::string external_source;
  int external_dim = 512;

  // toy-dense
  int toy_pool = 8;
  double toy_gain = 15.0;

  Precision precision = Precision::single;

  // Defaults for a given query geometry: window 20 up to a 64px side, 50 above.
  static EncoderConfig defaults(EncoderVariant variant, const Geometry& geometry);

  void validate() const;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual FingerprintKind kind() const = 0;
  virtual Fingerprint encode(const ImageTensor& image) const = 0;
};

// Quantize to bins of `quantization_step`, hash every byte window with SHA-256
// (low 64 bits), keep the `signature_budget` smallest distinct values.
HashSignature encode_pixel_hash(const ImageTensor& image, const EncoderConfig& cfg);

// Luma, 3x3 edge-replicated mean filter, block means against the mean of block means.
HashSignature encode_perceptual_hash(const ImageTensor& image, const EncoderConfig& cfg);

// Builds a one-off external encoder from cfg.external_source and encodes once.
// Long-lived callers should hold the Encoder from make_encoder instead.
DenseEmbedding encode_external(const ImageTensor& image, const EncoderConfig& cfg);

class PixelHashEncoder final : public Encoder {
 public:
  explicit PixelHashEncoder(EncoderConfig cfg);
  FingerprintKind kind() const override { return FingerprintKind::window_hash; }
  Fingerprint encode(const ImageTensor& image) const override;

 private:
  EncoderConfig cfg_;
};

class PerceptualHashEncoder final : public Encoder {
 public:
  explicit PerceptualHashEncoder(EncoderConfig cfg);
  FingerprintKind kind() const override { return FingerprintKind::perceptual_bits; }
  Fingerprint encode(const ImageTensor& image) const override;

 private:
  EncoderConfig cfg_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg);

}  // namespace advqdet
