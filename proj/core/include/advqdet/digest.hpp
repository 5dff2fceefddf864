#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

namespace advqdet {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);

std::string to_hex(const Digest& d);
Digest digest_from_hex(const std::string& hex);

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept;
};

// Reusable SHA-256 context for hashing many short buffers (window hashing).
// Not thread-safe; one instance per thread.
class Sha256Stream {
 public:
  Sha256Stream();
  ~Sha256Stream();
  Sha256Stream(const Sha256Stream&) = delete;
  Sha256Stream& operator=(const Sha256Stream&) = delete;

  Digest hash(std::span<const std::uint8_t> data);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace advqdet
