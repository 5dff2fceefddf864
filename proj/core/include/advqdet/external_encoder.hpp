#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "advqdet/encoders.hpp"

namespace advqdet {

// Dense encoder backed by a preloaded AQDE file, keyed by content digest.
class EmbeddingFileEncoder final : public Encoder {
 public:
  explicit EmbeddingFileEncoder(const std::filesystem::path& path,
                                Precision precision = Precision::single);

  FingerprintKind kind() const override { return FingerprintKind::dense; }
  Fingerprint encode(const ImageTensor& image) const override;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::size_t dim_ = 0;
  Precision precision_;
  std::unordered_map<Digest, std::vector<float>, DigestHash> table_;
};

// Dense encoder running in a child process (`/bin/sh -c command`), spoken to
// over stdin/stdout with the embedding round-trip protocol. One request is in
// flight per connection at a time.
class ProcessEncoder final : public Encoder {
 public:
  ProcessEncoder(const std::string& command, std::size_t dim,
                 Precision precision = Precision::single);
  ~ProcessEncoder() override;
  ProcessEncoder(const ProcessEncoder&) = delete;
  ProcessEncoder& operator=(const ProcessEncoder&) = delete;

  FingerprintKind kind() const override { return FingerprintKind::dense; }
  Fingerprint encode(const ImageTensor& image) const override;

  std::vector<float> round_trip(const ImageTensor& image) const;

 private:
  std::size_t dim_;
  Precision precision_;
  int to_child_ = -1;
  int from_child_ = -1;
  int pid_ = -1;
  mutable std::mutex mu_;
};

// Parses "file:<path>" or "exec:<command>" from cfg.external_source.
std::unique_ptr<Encoder> make_external_encoder(const EncoderConfig& cfg);

}  // namespace advqdet
