#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "advqdet/bytes.hpp"
#include "advqdet/digest.hpp"
#include "advqdet/image.hpp"

namespace advqdet {

// Embedding exchange file ("AQDE"), little-endian:
//   magic "AQDE" | version u32 = 1 | dtype u8 (0 = f32, 1 = f16) | dim u32 | count u64
//   then `count` records of [32-byte content digest | dim values].
inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

enum class ValueType : std::uint8_t { f32 = 0, f16 = 1 };

struct EmbeddingRecord {
  Digest key{};
  std::vector<float> values;
};

struct EmbeddingFile {
  ValueType dtype = ValueType::f32;
  std::uint32_t dim = 0;
  std::vector<EmbeddingRecord> records;
};

std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFile& file);
EmbeddingFile decode_embedding_file(std::span<const std::uint8_t> bytes);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file);
EmbeddingFile read_embedding_file(const std::filesystem::path& path);

namespace aqde {

void write_header(ByteWriter& w, std::uint32_t version, ValueType dtype, std::uint32_t dim,
                  std::uint64_t count);
struct Header {
  std::uint32_t version;
  ValueType dtype;
  std::uint32_t dim;
  std::uint64_t count;
};
Header read_header(ByteReader& r);
void write_values(ByteWriter& w, ValueType dtype, std::span<const float> values);
std::vector<float> read_values(ByteReader& r, ValueType dtype, std::uint32_t dim);

}  // namespace aqde

// Embedding round-trip protocol.
//   request  = u32 payload length | image payload (see serialize_image)
//   response = dim f32 values (dim agreed out of band)
std::vector<std::uint8_t> encode_embedding_request(const ImageTensor& image);
std::vector<std::uint8_t> encode_embedding_response(std::span<const float> values);

// Blocking helpers over POSIX file descriptors. read_exact returns false on EOF
// before any byte was read and throws TransportError on a partial read.
bool read_exact(int fd, void* buffer, std::size_t n);
void write_all(int fd, const void* buffer, std::size_t n);

// Reads one length-prefixed frame; nullopt on clean EOF.
std::optional<std::vector<std::uint8_t>> read_frame(int fd);
void write_frame(int fd, std::span<const std::uint8_t> payload);

// Serves the round-trip protocol until EOF on in_fd; returns the number of requests handled.
std::size_t serve_embedding_protocol(int in_fd, int out_fd,
                                     const std::function<std::vector<float>(const ImageTensor&)>& embed);

}  // namespace advqdet
