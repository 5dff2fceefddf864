#include "advqdet/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"

namespace advqdet {

void validate_geometry(const Geometry& g) {
  if (g.height <= 0 || g.width <= 0) throw ContractViolation("image sides must be positive");
  if (g.channels != 1 && g.channels != 3) throw ContractViolation("channels must be 1 or 3");
}

ImageTensor::ImageTensor(Geometry geometry, std::vector<float> data)
    : geometry_(geometry), data_(std::move(data)) {
  validate_geometry(geometry_);
  if (data_.size() != geometry_.size()) {
    throw ContractViolation("image data length " + std::to_string(data_.size()) +
                            " does not match geometry " + std::to_string(geometry_.size()));
  }
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ContractViolation("image intensity outside [0,1]: " + std::to_string(v));
    }
  }
}

ImageTensor ImageTensor::filled(Geometry geometry, float value) {
  validate_geometry(geometry);
  return ImageTensor(geometry, std::vector<float>(geometry.size(), value));
}

ImageTensor ImageTensor::clamped(Geometry geometry, std::span<const float> data) {
  std::vector<float> v(data.begin(), data.end());
  for (float& x : v) {
    if (std::isnan(x)) throw ContractViolation("NaN intensity");
    x = std::clamp(x, 0.0f, 1.0f);
  }
  return ImageTensor(geometry, std::move(v));
}

std::vector<std::uint8_t> serialize_image(const ImageTensor& image) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(image.height()));
  w.u32(static_cast<std::uint32_t>(image.width()));
  w.u8(static_cast<std::uint8_t>(image.channels()));
  for (float v : image.data()) w.f32(v);
  return w.take();
}

ImageTensor deserialize_image(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Geometry g;
  g.height = static_cast<int>(r.u32());
  g.width = static_cast<int>(r.u32());
  g.channels = r.u8();
  if (g.height <= 0 || g.width <= 0 || g.height > 1 << 16 || g.width > 1 << 16) {
    throw FormatError("image payload has invalid sides");
  }
  if (g.channels != 1 && g.channels != 3) throw FormatError("image payload has invalid channels");
  if (r.remaining() != g.size() * 4) throw FormatError("image payload length mismatch");
  std::vector<float> data(g.size());
  for (auto& v : data) v = r.f32();
  return ImageTensor(g, std::move(data));
}

Digest content_digest(const ImageTensor& image) { return sha256(serialize_image(image)); }

ImageTensor read_image_file(const std::filesystem::path& path) {
  return deserialize_image(read_file_bytes(path));
}

void write_image_file(const std::filesystem::path& path, const ImageTensor& image) {
  write_file_bytes(path, serialize_image(image));
}

std::vector<ImageTensor> load_image_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_image_file(f));
  return out;
}

double linf_distance(const ImageTensor& a, const ImageTensor& b) {
  require(a.geometry() == b.geometry(), "linf_distance: geometry mismatch");
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(da[i]) - db[i]));
  }
  return m;
}

double l2_distance(const ImageTensor& a, const ImageTensor& b) {
  require(a.geometry() == b.geometry(), "l2_distance: geometry mismatch");
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace advqdet
