#include "advqdet/exchange.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/half.hpp"

namespace advqdet {

namespace aqde {

void write_header(ByteWriter& w, std::uint32_t version, ValueType dtype, std::uint32_t dim,
                  std::uint64_t count) {
  w.str("AQDE");
  w.u32(version);
  w.u8(static_cast<std::uint8_t>(dtype));
  w.u32(dim);
  w.u64(count);
}

Header read_header(ByteReader& r) {
  if (r.str(4) != "AQDE") throw FormatError("bad magic: not an AQDE file");
  Header h;
  h.version = r.u32();
  const auto dt = r.u8();
  if (dt > 1) throw FormatError("unknown AQDE dtype " + std::to_string(dt));
  h.dtype = static_cast<ValueType>(dt);
  h.dim = r.u32();
  h.count = r.u64();
  if (h.dim == 0) throw FormatError("AQDE dim must be positive");
  return h;
}

void write_values(ByteWriter& w, ValueType dtype, std::span<const float> values) {
  for (float v : values) {
    if (dtype == ValueType::f32) {
      w.f32(v);
    } else {
      w.u16(float_to_half(v));
    }
  }
}

std::vector<float> read_values(ByteReader& r, ValueType dtype, std::uint32_t dim) {
  std::vector<float> out(dim);
  for (auto& v : out) v = dtype == ValueType::f32 ? r.f32() : half_to_float(r.u16());
  return out;
}

}  // namespace aqde

std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFile& file) {
  if (file.dim == 0) throw ContractViolation("embedding file dim must be positive");
  ByteWriter w;
  aqde::write_header(w, kEmbeddingFileVersion, file.dtype, file.dim, file.records.size());
  for (const auto& rec : file.records) {
    if (rec.values.size() != file.dim) throw ContractViolation("record dimension mismatch");
    w.bytes(rec.key);
    aqde::write_values(w, file.dtype, rec.values);
  }
  return w.take();
}

EmbeddingFile decode_embedding_file(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto h = aqde::read_header(r);
  if (h.version != kEmbeddingFileVersion) {
    throw FormatError("unsupported AQDE version " + std::to_string(h.version));
  }
  const std::size_t record_bytes = 32 + static_cast<std::size_t>(h.dim) *
                                            (h.dtype == ValueType::f32 ? 4 : 2);
  if (h.count > r.remaining() / record_bytes) throw FormatError("AQDE record count exceeds file");
  EmbeddingFile f;
  f.dtype = h.dtype;
  f.dim = h.dim;
  f.records.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    EmbeddingRecord rec;
    auto key = r.bytes(32);
    std::copy(key.begin(), key.end(), rec.key.begin());
    rec.values = aqde::read_values(r, h.dtype, h.dim);
    f.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after AQDE records");
  return f;
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file) {
  write_file_bytes(path, encode_embedding_file(file));
}

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  return decode_embedding_file(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_embedding_request(const ImageTensor& image) {
  const auto payload = serialize_image(image);
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

std::vector<std::uint8_t> encode_embedding_response(std::span<const float> values) {
  ByteWriter w;
  for (float v : values) w.f32(v);
  return w.take();
}

bool read_exact(int fd, void* buffer, std::size_t n) {
  auto* p = static_cast<std::uint8_t*>(buffer);
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::read(fd, p + got, n - got);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("read failed: ") + std::strerror(errno));
    }
    if (k == 0) {
      if (got == 0) return false;
      throw TransportError("unexpected EOF mid-frame");
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

void write_all(int fd, const void* buffer, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(buffer);
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t k = ::write(fd, p + sent, n - sent);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(k);
  }
}

std::optional<std::vector<std::uint8_t>> read_frame(int fd) {
  std::uint8_t len_bytes[4];
  if (!read_exact(fd, len_bytes, 4)) return std::nullopt;
  ByteReader lr(len_bytes);
  const std::uint32_t len = lr.u32();
  if (len > (1u << 30)) throw TransportError("frame too large");
  std::vector<std::uint8_t> payload(len);
  if (len > 0 && !read_exact(fd, payload.data(), len)) throw TransportError("EOF before payload");
  return payload;
}

void write_frame(int fd, std::span<const std::uint8_t> payload) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  write_all(fd, w.buffer().data(), w.buffer().size());
}

std::size_t serve_embedding_protocol(
    int in_fd, int out_fd, const std::function<std::vector<float>(const ImageTensor&)>& embed) {
  std::size_t handled = 0;
  while (auto frame = read_frame(in_fd)) {
    const ImageTensor image = deserialize_image(*frame);
    const auto values = embed(image);
    const auto bytes = encode_embedding_response(values);
    write_all(out_fd, bytes.data(), bytes.size());
    ++handled;
  }
  return handled;
}

}  // namespace advqdet
