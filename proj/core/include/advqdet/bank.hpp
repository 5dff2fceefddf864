#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advqdet/digest.hpp"
#include "advqdet/fingerprint.hpp"
#include "advqdet/target_model.hpp"

namespace advqdet {

enum class BankScope { global, per_user };
enum class Eviction { none, fifo };

std::string_view to_string(BankScope s);
std::string_view to_string(Eviction e);
BankScope bank_scope_from_string(std::string_view s);
Eviction eviction_from_string(std::string_view s);

struct BankConfig {
  BankScope scope = BankScope::global;
  std::optional<std::size_t> capacity;  // unlimited when unset
  Eviction eviction = Eviction::none;
  Precision precision = Precision::single;

  void validate() const;
};

struct BankEntry {
  Fingerprint fingerprint;
  std::string user_id;
  std::uint64_t seq = 0;
  std::optional<ModelOutput> cached_output;
  std::uint64_t insert_index = 0;  // assigned by append
  Digest key{};                    // content digest of the query image
};

using EntryRef = std::shared_ptr<const BankEntry>;

struct SearchResult {
  double score = -std::numeric_limits<double>::infinity();
  EntryRef best;

  bool found() const { return best != nullptr; }
};

// Store of historical fingerprints with exact maximum-similarity search.
// Searches take a shared lock for the whole scan, so each one sees exactly
// the entries appended before it started. Appends are serialized.
class EmbeddingBank {
 public:
  EmbeddingBank(FingerprintKind kind, BankConfig config);

  FingerprintKind kind() const { return kind_; }
  const BankConfig& config() const { return config_; }

  // Returns the assigned insert_index. Dense fingerprints are re-stored at
  // the bank precision.
  std::uint64_t append(BankEntry entry);

  // Maximum similarity over in-scope entries, ties to the smallest
  // insert_index. `scope_user` is required under per-user scope and ignored
  // under global scope.
  SearchResult search_max(const Fingerprint& probe,
                          std::optional<std::string_view> scope_user = std::nullopt) const;

  // Mean L2 distance, in raw feature space, from the probe to its k nearest
  // entries of `user` (all of them if fewer than k). Throws NoHistory when
  // the user has no entries.
  double knn_mean_distance(const DenseEmbedding& probe, std::size_t k,
                           std::string_view user) const;

  std::size_t size() const;
  std::size_t user_size(std::string_view user) const;
  std::vector<EntryRef> snapshot() const;
  std::uint64_t next_insert_index() const;

  // Dense banks only. AQDE version 2 with raw f32 values and a metadata trailer.
  void save(const std::filesystem::path& path) const;
  static EmbeddingBank load(const std::filesystem::path& path, BankConfig config);

  EmbeddingBank(const EmbeddingBank&) = delete;
  EmbeddingBank& operator=(const EmbeddingBank&) = delete;
  EmbeddingBank(EmbeddingBank&& other) noexcept;

 private:
  std::uint32_t intern_user(const std::string& user);
  std::optional<std::uint32_t> find_user(std::string_view user) const;
  void evict_front();
  void compact();
  std::size_t live() const { return entries_.size() - head_; }

  FingerprintKind kind_;
  BankConfig config_;
  mutable std::shared_mutex mu_;

  std::vector<EntryRef> entries_;  // rows [head_, end) are live
  std::vector<std::uint32_t> user_of_;
  std::size_t head_ = 0;
  std::uint64_t next_index_ = 0;

  // Dense fast path: one row of stored values per entry, in bank precision.
  std::size_t dim_ = 0;
  std::vector<float> rows_single_;
  std::vector<std::uint16_t> rows_half_;
  std::vector<double> norms_;
  std::vector<double> magnitudes_;

  std::unordered_map<std::string, std::uint32_t> user_ids_;
  std::vector<std::size_t> user_counts_;
};

struct StorageEstimate {
  double bytes = 0.0;
  double gib = 0.0;
};

StorageEstimate storage_estimate(std::uint64_t users, std::uint64_t queries_per_user,
                                 std::uint64_t dim, Precision precision);

}  // namespace advqdet
