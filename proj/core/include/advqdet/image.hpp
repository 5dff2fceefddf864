#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advqdet/digest.hpp"

namespace advqdet {

struct Geometry {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  int max_side() const { return height > width ? height : width; }
  bool operator==(const Geometry&) const = default;
};

// H x W x C intensities in [0,1], row-major with channels innermost.
// Immutable once constructed; every element is validated finite and in range.
class ImageTensor {
 public:
  ImageTensor(Geometry geometry, std::vector<float> data);

  static ImageTensor filled(Geometry geometry, float value);
  // Clamps every value into [0,1] before validating; NaN is still rejected.
  static ImageTensor clamped(Geometry geometry, std::span<const float> data);

  const Geometry& geometry() const { return geometry_; }
  int height() const { return geometry_.height; }
  int width() const { return geometry_.width; }
  int channels() const { return geometry_.channels; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  float at(int row, int col, int channel) const {
    return data_[(static_cast<std::size_t>(row) * geometry_.width + col) * geometry_.channels +
                 channel];
  }

  bool operator==(const ImageTensor& other) const = default;

 private:
  Geometry geometry_;
  std::vector<float> data_;
};

void validate_geometry(const Geometry& g);

// Raw image payload shared by the embedding protocol and on-disk tensors:
// height u32 | width u32 | channels u8 | f32 pixels, little-endian.
std::vector<std::uint8_t> serialize_image(const ImageTensor& image);
ImageTensor deserialize_image(std::span<const std::uint8_t> payload);

// SHA-256 of serialize_image(image); identical pixels give identical keys
// regardless of which user sent them.
Digest content_digest(const ImageTensor& image);

ImageTensor read_image_file(const std::filesystem::path& path);
void write_image_file(const std::filesystem::path& path, const ImageTensor& image);

// Loads every regular file in the directory in lexicographic path order.
std::vector<ImageTensor> load_image_directory(const std::filesystem::path& dir);

double linf_distance(const ImageTensor& a, const ImageTensor& b);
double l2_distance(const ImageTensor& a, const ImageTensor& b);

}  // namespace advqdet
