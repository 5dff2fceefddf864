#include "advqdet/bank.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/exchange.hpp"
#include "advqdet/half.hpp"

namespace advqdet {

namespace {

constexpr std::uint32_t kBankFileVersion = 2;

const std::array<float, 65536>& half_table() {
  static const auto table = [] {
    std::array<float, 65536> t{};
    for (std::uint32_t i = 0; i < t.size(); ++i) t[i] = half_to_float(static_cast<std::uint16_t>(i));
    return t;
  }();
  return table;
}

void check_kind(FingerprintKind bank, const Fingerprint& f, const char* op) {
  if (kind_of(f) != bank) {
    throw ContractViolation(std::string(op) + ": fingerprint kind " +
                            std::string(to_string(kind_of(f))) + " does not match bank kind " +
                            std::string(to_string(bank)));
  }
}

}  // namespace

std::string_view to_string(BankScope s) { return s == BankScope::global ? "global" : "per-user"; }
std::string_view to_string(Eviction e) { return e == Eviction::none ? "none" : "fifo"; }

BankScope bank_scope_from_string(std::string_view s) {
  if (s == "global") return BankScope::global;
  if (s == "per-user") return BankScope::per_user;
  throw ConfigError("unknown bank scope '" + std::string(s) + "'");
}

Eviction eviction_from_string(std::string_view s) {
  if (s == "none") return Eviction::none;
  if (s == "fifo") return Eviction::fifo;
  throw ConfigError("unknown eviction policy '" + std::string(s) + "'");
}

void BankConfig::validate() const {
  if (capacity && *capacity < 1) throw ConfigError("bank capacity must be at least 1");
}

EmbeddingBank::EmbeddingBank(FingerprintKind kind, BankConfig config)
    : kind_(kind), config_(config) {
  config_.validate();
}

EmbeddingBank::EmbeddingBank(EmbeddingBank&& other) noexcept
    : kind_(other.kind_), config_(other.config_) {
  std::unique_lock lock(other.mu_);
  entries_ = std::move(other.entries_);
  user_of_ = std::move(other.user_of_);
  head_ = other.head_;
  next_index_ = other.next_index_;
  dim_ = other.dim_;
  rows_single_ = std::move(other.rows_single_);
  rows_half_ = std::move(other.rows_half_);
  norms_ = std::move(other.norms_);
  magnitudes_ = std::move(other.magnitudes_);
  user_ids_ = std::move(other.user_ids_);
  user_counts_ = std::move(other.user_counts_);
}

std::uint32_t EmbeddingBank::intern_user(const std::string& user) {
  auto [it, inserted] = user_ids_.try_emplace(user, static_cast<std::uint32_t>(user_counts_.size()));
  if (inserted) user_counts_.push_back(0);
  return it->second;
}

std::optional<std::uint32_t> EmbeddingBank::find_user(std::string_view user) const {
  auto it = user_ids_.find(std::string(user));
  if (it == user_ids_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingBank::evict_front() {
  --user_counts_[user_of_[head_]];
  entries_[head_].reset();
  ++head_;
  if (head_ >= 1024 && head_ * 2 >= entries_.size()) compact();
}

void EmbeddingBank::compact() {
  const auto h = static_cast<std::ptrdiff_t>(head_);
  entries_.erase(entries_.begin(), entries_.begin() + h);
  user_of_.erase(user_of_.begin(), user_of_.begin() + h);
  if (kind_ == FingerprintKind::dense) {
    norms_.erase(norms_.begin(), norms_.begin() + h);
    magnitudes_.erase(magnitudes_.begin(), magnitudes_.begin() + h);
    const auto off = h * static_cast<std::ptrdiff_t>(dim_);
    if (config_.precision == Precision::single) {
      rows_single_.erase(rows_single_.begin(), rows_single_.begin() + off);
    } else {
      rows_half_.erase(rows_half_.begin(), rows_half_.begin() + off);
    }
  }
  head_ = 0;
}

std::uint64_t EmbeddingBank::append(BankEntry entry) {
  check_kind(kind_, entry.fingerprint, "append");
  if (kind_ == FingerprintKind::dense) {
    auto& e = std::get<DenseEmbedding>(entry.fingerprint);
    if (e.precision() != config_.precision) {
      const auto raw = e.raw_values();
      entry.fingerprint = DenseEmbedding(raw, config_.precision);
    }
  }

  std::unique_lock lock(mu_);
  if (kind_ == FingerprintKind::dense) {
    const auto& e = std::get<DenseEmbedding>(entry.fingerprint);
    if (dim_ == 0) dim_ = e.dim();
    if (e.dim() != dim_) {
      throw ContractViolation("append: embedding dimension " + std::to_string(e.dim()) +
                              " does not match bank dimension " + std::to_string(dim_));
    }
  }
  if (config_.capacity && live() >= *config_.capacity) {
    if (config_.eviction == Eviction::none) throw BankFull("embedding bank is at capacity");
    evict_front();
  }

  entry.insert_index = next_index_++;
  const auto uid = intern_user(entry.user_id);
  ++user_counts_[uid];

  if (kind_ == FingerprintKind::dense) {
    const auto& e = std::get<DenseEmbedding>(entry.fingerprint);
    if (config_.precision == Precision::single) {
      auto v = e.single_values();
      rows_single_.insert(rows_single_.end(), v.begin(), v.end());
    } else {
      auto v = e.half_values();
      rows_half_.insert(rows_half_.end(), v.begin(), v.end());
    }
    norms_.push_back(e.norm());
    magnitudes_.push_back(e.magnitude());
  }
  const auto index = entry.insert_index;
  user_of_.push_back(uid);
  entries_.push_back(std::make_shared<const BankEntry>(std::move(entry)));
  return index;
}

SearchResult EmbeddingBank::search_max(const Fingerprint& probe,
                                       std::optional<std::string_view> scope_user) const {
  check_kind(kind_, probe, "search_max");
  if (config_.scope == BankScope::per_user && !scope_user) {
    throw ContractViolation("search_max: per-user bank requires a scope user");
  }

  std::shared_lock lock(mu_);
  SearchResult result;
  std::optional<std::uint32_t> only;
  if (config_.scope == BankScope::per_user) {
    only = find_user(*scope_user);
    if (!only) return result;
  }
  const std::size_t n = entries_.size();
  std::size_t best = n;

  if (kind_ == FingerprintKind::dense) {
    if (head_ == n) return result;
    const auto& p = std::get<DenseEmbedding>(probe);
    if (p.dim() != dim_) throw ContractViolation("search_max: probe dimension does not match bank");
    const auto pv = p.values();
    const double pn = p.norm();
    const auto& table = half_table();
    for (std::size_t i = head_; i < n; ++i) {
      if (only && user_of_[i] != *only) continue;
      const std::size_t row = i * dim_;
      double dot = 0.0;
      if (config_.precision == Precision::single) {
        const float* r = rows_single_.data() + row;
        for (std::size_t j = 0; j < dim_; ++j) dot += static_cast<double>(r[j]) * static_cast<double>(pv[j]);
      } else {
        const std::uint16_t* r = rows_half_.data() + row;
        for (std::size_t j = 0; j < dim_; ++j) {
          dot += static_cast<double>(table[r[j]]) * static_cast<double>(pv[j]);
        }
      }
      const double s = detail::cosine_from(dot, norms_[i], pn);
      if (best == n || s > result.score) {
        result.score = s;
        best = i;
      }
    }
  } else {
    const auto& p = std::get<HashSignature>(probe);
    for (std::size_t i = head_; i < n; ++i) {
      if (only && user_of_[i] != *only) continue;
      const double s = hash_similarity(std::get<HashSignature>(entries_[i]->fingerprint), p);
      if (best == n || s > result.score) {
        result.score = s;
        best = i;
      }
    }
  }
  if (best != n) result.best = entries_[best];
  return result;
}

double EmbeddingBank::knn_mean_distance(const DenseEmbedding& probe, std::size_t k,
                                        std::string_view user) const {
  if (kind_ != FingerprintKind::dense) throw ContractViolation("knn_mean_distance: bank is not dense");
  require(k >= 1, "knn_mean_distance: k must be at least 1");

  std::shared_lock lock(mu_);
  const auto uid = find_user(user);
  if (!uid || user_counts_[*uid] == 0) throw NoHistory("no history for user '" + std::string(user) + "'");
  if (probe.dim() != dim_) throw ContractViolation("knn_mean_distance: probe dimension mismatch");

  std::vector<double> praw(dim_);
  for (std::size_t j = 0; j < dim_; ++j) praw[j] = static_cast<double>(probe.value(j)) * probe.magnitude();

  const auto& table = half_table();
  std::vector<double> dists;
  dists.reserve(user_counts_[*uid]);
  for (std::size_t i = head_; i < entries_.size(); ++i) {
    if (user_of_[i] != *uid) continue;
    const std::size_t row = i * dim_;
    const double m = magnitudes_[i];
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const float v = config_.precision == Precision::single ? rows_single_[row + j]
                                                             : table[rows_half_[row + j]];
      const double d = static_cast<double>(v) * m - praw[j];
      sq += d * d;
    }
    dists.push_back(std::sqrt(sq));
  }
  const std::size_t take = std::min(k, dists.size());
  std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(take), dists.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += dists[i];
  return sum / static_cast<double>(take);
}

std::size_t EmbeddingBank::size() const {
  std::shared_lock lock(mu_);
  return live();
}

std::size_t EmbeddingBank::user_size(std::string_view user) const {
  std::shared_lock lock(mu_);
  const auto uid = find_user(user);
  return uid ? user_counts_[*uid] : 0;
}

std::vector<EntryRef> EmbeddingBank::snapshot() const {
  std::shared_lock lock(mu_);
  return {entries_.begin() + static_cast<std::ptrdiff_t>(head_), entries_.end()};
}

std::uint64_t EmbeddingBank::next_insert_index() const {
  std::shared_lock lock(mu_);
  return next_index_;
}

void EmbeddingBank::save(const std::filesystem::path& path) const {
  if (kind_ != FingerprintKind::dense) throw ContractViolation("only dense banks can be saved");
  const auto entries = snapshot();
  const auto dim = entries.empty() ? std::size_t{1} : std::get<DenseEmbedding>(entries[0]->fingerprint).dim();

  ByteWriter w;
  aqde::write_header(w, kBankFileVersion, ValueType::f32, static_cast<std::uint32_t>(dim),
                     entries.size());
  for (const auto& e : entries) {
    w.bytes(e->key);
    aqde::write_values(w, ValueType::f32, std::get<DenseEmbedding>(e->fingerprint).raw_values());
  }
  for (const auto& e : entries) {
    if (e->user_id.size() > 0xFFFF) throw ContractViolation("user id too long to persist");
    w.u16(static_cast<std::uint16_t>(e->user_id.size()));
    w.str(e->user_id);
    w.u64(e->seq);
    if (e->cached_output) {
      const auto out = serialize_output(*e->cached_output);
      w.u32(static_cast<std::uint32_t>(out.size()));
      w.bytes(out);
    } else {
      w.u32(0);
    }
  }
  write_file_bytes(path, w.buffer());
}

EmbeddingBank EmbeddingBank::load(const std::filesystem::path& path, BankConfig config) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const auto h = aqde::read_header(r);
  if (h.version != kBankFileVersion) {
    throw FormatError("bank file must be AQDE version 2, got " + std::to_string(h.version));
  }
  const std::size_t record_bytes = 32 + static_cast<std::size_t>(h.dim) *
                                            (h.dtype == ValueType::f32 ? 4 : 2);
  if (h.count > r.remaining() / record_bytes) throw FormatError("bank record count exceeds file");

  std::vector<Digest> keys(h.count);
  std::vector<std::vector<float>> values(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    auto key = r.bytes(32);
    std::copy(key.begin(), key.end(), keys[i].begin());
    values[i] = aqde::read_values(r, h.dtype, h.dim);
  }
  EmbeddingBank bank(FingerprintKind::dense, config);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    BankEntry e{DenseEmbedding(values[i], config.precision), {}, 0, std::nullopt, 0, keys[i]};
    const auto len = r.u16();
    e.user_id = r.str(len);
    e.seq = r.u64();
    const auto out_len = r.u32();
    if (out_len > 0) e.cached_output = deserialize_output(r.bytes(out_len));
    bank.append(std::move(e));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in bank file");
  return bank;
}

StorageEstimate storage_estimate(std::uint64_t users, std::uint64_t queries_per_user,
                                 std::uint64_t dim, Precision precision) {
  require(users >= 1 && queries_per_user >= 1 && dim >= 1, "storage_estimate: inputs must be >= 1");
  StorageEstimate s;
  s.bytes = static_cast<double>(users) * static_cast<double>(queries_per_user) *
            static_cast<double>(dim) * static_cast<double>(bytes_per_value(precision));
  s.gib = s.bytes / 1073741824.0;
  return s;
}

}  // namespace advqdet
