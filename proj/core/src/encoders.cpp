#include "advqdet/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "advqdet/errors.hpp"
#include "advqdet/external_encoder.hpp"
#include "advqdet/toy_encoder.hpp"

namespace advqdet {

std::string_view to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::pixel_hash: return "pixel-hash";
    case EncoderVariant::perceptual_hash: return "perceptual-hash";
    case EncoderVariant::external: return "external";
    case EncoderVariant::toy_dense: return "toy-dense";
  }
  return "unknown";
}

EncoderVariant encoder_variant_from_string(std::string_view s) {
  if (s == "pixel-hash") return EncoderVariant::pixel_hash;
  if (s == "perceptual-hash") return EncoderVariant::perceptual_hash;
  if (s == "external") return EncoderVariant::external;
  if (s == "toy-dense") return EncoderVariant::toy_dense;
  throw ConfigError("unknown encoder variant '" + std::string(s) + "'");
}

EncoderConfig EncoderConfig::defaults(EncoderVariant variant, const Geometry& geometry) {
  EncoderConfig cfg;
  cfg.variant = variant;
  cfg.window_size = geometry.max_side() <= 64 ? 20 : 50;
  return cfg;
}

void EncoderConfig::validate() const {
  if (quantization_step < 1 || quantization_step > 255) {
    throw ConfigError("quantization_step must be in [1,255]");
  }
  if (window_size < 1) throw ConfigError("window_size must be >= 1");
  if (window_stride < 1) throw ConfigError("window_stride must be >= 1");
  if (signature_budget < 1) throw ConfigError("signature_budget must be >= 1");
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (variant == EncoderVariant::external) {
    if (external_source.empty()) throw ConfigError("external encoder needs external_source");
    if (external_dim < 1) throw ConfigError("external_dim must be >= 1");
  }
  if (variant == EncoderVariant::toy_dense) {
    if (toy_pool < 1) throw ConfigError("toy_pool must be >= 1");
    if (!(toy_gain > 0.0)) throw ConfigError("toy_gain must be positive");
  }
}

HashSignature encode_pixel_hash(const ImageTensor& image, const EncoderConfig& cfg) {
  cfg.validate();
  const auto data = image.data();
  const std::size_t window = static_cast<std::size_t>(cfg.window_size);
  if (data.size() < window) {
    throw DegenerateInput("image has " + std::to_string(data.size()) +
                          " bytes, smaller than one hash window of " + std::to_string(window));
  }

  std::vector<std::uint8_t> bytes(data.size());
  const long step = cfg.quantization_step;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const long v = std::lround(static_cast<double>(data[i]) * 255.0);
    bytes[i] = static_cast<std::uint8_t>((v / step) * step);
  }

  Sha256Stream hasher;
  std::vector<std::uint64_t> hashes;
  hashes.reserve((bytes.size() - window) / cfg.window_stride + 1);
  for (std::size_t start = 0; start + window <= bytes.size(); start += cfg.window_stride) {
    const Digest d = hasher.hash(std::span<const std::uint8_t>(bytes.data() + start, window));
    // Low 64 bits of the digest read as a big-endian 256-bit integer.
    std::uint64_t h = 0;
    for (int k = 24; k < 32; ++k) h = (h << 8) | d[k];
    hashes.push_back(h);
  }

  std::sort(hashes.begin(), hashes.end());
  hashes.erase(std::unique(hashes.begin(), hashes.end()), hashes.end());
  const std::size_t budget = static_cast<std::size_t>(cfg.signature_budget);
  if (hashes.size() > budget) hashes.resize(budget);
  return HashSignature::window(std::move(hashes), budget);
}

HashSignature encode_perceptual_hash(const ImageTensor& image, const EncoderConfig& cfg) {
  cfg.validate();
  const int h = image.height();
  const int w = image.width();
  const int b = cfg.block_size;
  if (h < b || w < b) {
    throw DegenerateInput("image smaller than one " + std::to_string(b) + "x" +
                          std::to_string(b) + " block");
  }

  std::vector<double> gray(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double g;
      if (image.channels() == 1) {
        g = image.at(r, c, 0);
      } else {
        g = 0.299 * image.at(r, c, 0) + 0.587 * image.at(r, c, 1) + 0.114 * image.at(r, c, 2);
      }
      gray[static_cast<std::size_t>(r) * w + c] = g;
    }
  }

  std::vector<double> filtered(gray.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        const int rr = std::clamp(r + dr, 0, h - 1);
        for (int dc = -1; dc <= 1; ++dc) {
          const int cc = std::clamp(c + dc, 0, w - 1);
          s += gray[static_cast<std::size_t>(rr) * w + cc];
        }
      }
      filtered[static_cast<std::size_t>(r) * w + c] = s / 9.0;
    }
  }

  const int rows = h / b;
  const int cols = w / b;
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(rows) * cols);
  for (int br = 0; br < rows; ++br) {
    for (int bc = 0; bc < cols; ++bc) {
      double s = 0.0;
      for (int r = br * b; r < (br + 1) * b; ++r) {
        for (int c = bc * b; c < (bc + 1) * b; ++c) s += filtered[static_cast<std::size_t>(r) * w + c];
      }
      means.push_back(s / (static_cast<double>(b) * b));
    }
  }
  double global = 0.0;
  for (double m : means) global += m;
  global /= static_cast<double>(means.size());

  std::vector<bool> bits(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) bits[i] = means[i] > global;
  return HashSignature::bits(bits);
}

PixelHashEncoder::PixelHashEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

Fingerprint PixelHashEncoder::encode(const ImageTensor& image) const {
  return encode_pixel_hash(image, cfg_);
}

PerceptualHashEncoder::PerceptualHashEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

Fingerprint PerceptualHashEncoder::encode(const ImageTensor& image) const {
  return encode_perceptual_hash(image, cfg_);
}

DenseEmbedding encode_external(const ImageTensor& image, const EncoderConfig& cfg) {
  if (cfg.variant != EncoderVariant::external) {
    throw ContractViolation("encode_external requires the external variant");
  }
  auto enc = make_external_encoder(cfg);
  return std::get<DenseEmbedding>(enc->encode(image));
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  switch (cfg.variant) {
    case EncoderVariant::pixel_hash: return std::make_unique<PixelHashEncoder>(cfg);
    case EncoderVariant::perceptual_hash: return std::make_unique<PerceptualHashEncoder>(cfg);
    case EncoderVariant::external: return make_external_encoder(cfg);
    case EncoderVariant::toy_dense:
      return std::make_unique<ToyFeatureEncoder>(cfg.toy_pool, cfg.toy_gain, cfg.precision);
  }
  throw ConfigError("unsupported encoder variant");
}

}  // namespace advqdet
