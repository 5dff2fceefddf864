#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "advqdet/bank.hpp"
#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"
#include "test_util.hpp"

using namespace advqdet;

namespace {

BankEntry dense_entry(std::vector<float> v, std::string user = "u", std::uint64_t seq = 0,
                      Precision p = Precision::single) {
  return BankEntry{DenseEmbedding(v, p), std::move(user), seq, std::nullopt, 0, {}};
}

BankEntry hash_entry(std::vector<std::uint64_t> e, std::string user = "u") {
  return BankEntry{HashSignature::window(std::move(e), 50), std::move(user), 0, std::nullopt, 0, {}};
}

// Linear scan over the snapshot with the plain similarity kernel.
SearchResult brute_force(const EmbeddingBank& bank, const Fingerprint& probe,
                         std::optional<std::string> user = std::nullopt) {
  SearchResult r;
  for (const auto& e : bank.snapshot()) {
    if (user && e->user_id != *user) continue;
    const double s = similarity(e->fingerprint, probe);
    if (!r.best || s > r.score) {
      r.score = s;
      r.best = e;
    }
  }
  return r;
}

}  // namespace

TEST(Bank, AppendToEmptyBank) {
  EmbeddingBank bank(FingerprintKind::dense, {});
  EXPECT_EQ(bank.append(dense_entry({1, 2, 3})), 0u);
  EXPECT_EQ(bank.size(), 1u);
  EXPECT_EQ(bank.append(dense_entry({1, 2, 4})), 1u);
}

TEST(Bank, EmptySearchIsSentinel) {
  EmbeddingBank bank(FingerprintKind::dense, {});
  const auto r = bank.search_max(DenseEmbedding(std::vector<float>{1, 0}));
  EXPECT_FALSE(r.found());
  EXPECT_EQ(r.score, -std::numeric_limits<double>::infinity());
}

TEST(Bank, ProbeItselfScoresOne) {
  EmbeddingBank bank(FingerprintKind::dense, {});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) bank.append(dense_entry(testutil::random_vector(16, rng)));
  const auto v = testutil::random_vector(16, rng);
  bank.append(dense_entry(v));
  const auto r = bank.search_max(DenseEmbedding(v));
  EXPECT_DOUBLE_EQ(r.score, 1.0);
  EXPECT_EQ(r.best->insert_index, 10u);
}

TEST(Bank, KindMismatchIsContractViolation) {
  EmbeddingBank bank(FingerprintKind::dense, {});
  EXPECT_THROW(bank.append(hash_entry({1})), ContractViolation);
  EXPECT_THROW(bank.search_max(HashSignature::window({1}, 50)), ContractViolation);
  bank.append(dense_entry({1, 2}));
  EXPECT_THROW(bank.append(dense_entry({1, 2, 3})), ContractViolation);
}

TEST(Bank, FifoKeepsMostRecent) {
  BankConfig cfg;
  cfg.capacity = 2;
  cfg.eviction = Eviction::fifo;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  bank.append(dense_entry({1, 0, 0}));
  bank.append(dense_entry({0, 1, 0}));
  bank.append(dense_entry({0, 0, 1}));
  const auto snap = bank.snapshot();
  ASSERT_EQ(snap.size(), 2u);
  EXPECT_EQ(snap[0]->insert_index, 1u);
  EXPECT_EQ(snap[1]->insert_index, 2u);
  EXPECT_LT(bank.search_max(DenseEmbedding(std::vector<float>{1, 0, 0})).score, 0.5);
  EXPECT_DOUBLE_EQ(bank.search_max(DenseEmbedding(std::vector<float>{0, 0, 1})).score, 1.0);
}

TEST(Bank, FifoLongRunMatchesBruteForce) {
  std::mt19937_64 rng(2);
  for (auto p : {Precision::single, Precision::half}) {
    BankConfig cfg;
    cfg.capacity = 50;
    cfg.eviction = Eviction::fifo;
    cfg.precision = p;
    EmbeddingBank bank(FingerprintKind::dense, cfg);
    for (int i = 0; i < 3000; ++i) {
      bank.append(dense_entry(testutil::random_vector(8, rng), "u", 0, p));
      if (i % 97 == 0) {
        const Fingerprint probe = DenseEmbedding(testutil::random_vector(8, rng), p);
        const auto a = bank.search_max(probe);
        const auto b = brute_force(bank, probe);
        EXPECT_EQ(a.score, b.score);
        EXPECT_EQ(a.best, b.best);
        const auto knn = bank.knn_mean_distance(std::get<DenseEmbedding>(probe), 3, "u");
        EXPECT_TRUE(std::isfinite(knn));
      }
    }
    EXPECT_EQ(bank.size(), 50u);
    EXPECT_EQ(bank.snapshot().front()->insert_index, 2950u);
  }
}

TEST(Bank, CapacityWithoutEvictionIsBankFull) {
  BankConfig cfg;
  cfg.capacity = 1;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  bank.append(dense_entry({1, 0}));
  EXPECT_THROW(bank.append(dense_entry({0, 1})), BankFull);
  cfg.capacity = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Bank, PerUserScopeHidesOtherUsers) {
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  bank.append(dense_entry({1, 2, 3}, "alice"));
  const Fingerprint probe = DenseEmbedding(std::vector<float>{1, 2, 3});
  EXPECT_FALSE(bank.search_max(probe, "bob").found());
  EXPECT_DOUBLE_EQ(bank.search_max(probe, "alice").score, 1.0);
  EXPECT_THROW(bank.search_max(probe), ContractViolation);
}

TEST(Bank, GlobalScopeMatchesAcrossUsers) {
  EmbeddingBank bank(FingerprintKind::window_hash, {});
  bank.append(hash_entry({1, 2, 3}, "alice"));
  const auto r = bank.search_max(HashSignature::window({1, 2, 3}, 50), "bob");
  EXPECT_DOUBLE_EQ(r.score, 1.0);
  EXPECT_EQ(r.best->user_id, "alice");
}

TEST(Bank, TiesGoToSmallestInsertIndex) {
  EmbeddingBank bank(FingerprintKind::window_hash, {});
  bank.append(hash_entry({1, 2, 3, 4}));
  bank.append(hash_entry({1, 2, 7, 8}));
  bank.append(hash_entry({1, 2, 3, 4}));
  const auto r = bank.search_max(HashSignature::window({1, 2, 3, 4}, 50));
  EXPECT_EQ(r.best->insert_index, 0u);
  const auto s = bank.search_max(HashSignature::window({1, 2, 9, 10}, 50));
  EXPECT_DOUBLE_EQ(s.score, 0.5);
  EXPECT_EQ(s.best->insert_index, 0u);
}

TEST(Bank, HundredRandomVectorsMatchBruteForce) {
  std::mt19937_64 rng(3);
  EmbeddingBank bank(FingerprintKind::dense, {});
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < 100; ++i) {
    rows.push_back(testutil::random_vector(32, rng));
    bank.append(dense_entry(rows.back()));
  }
  for (int t = 0; t < 20; ++t) {
    const auto pv = testutil::random_vector(32, rng);
    // Independent scan in plain doubles.
    double best = -2.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t j = 0; j < 32; ++j) {
        dot += static_cast<double>(rows[i][j]) * pv[j];
        na += static_cast<double>(rows[i][j]) * rows[i][j];
        nb += static_cast<double>(pv[j]) * pv[j];
      }
      const double c = dot / std::sqrt(na * nb);
      if (c > best) {
        best = c;
        arg = i;
      }
    }
    const auto r = bank.search_max(DenseEmbedding(pv));
    EXPECT_NEAR(r.score, best, 1e-6);
    EXPECT_EQ(r.best->insert_index, arg);
  }
}

TEST(Bank, RandomBanksEqualLinearScanExactly) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = trial < 3 ? 1 + rng() % 500 : 10000;
    const Precision p = trial % 2 ? Precision::half : Precision::single;
    BankConfig cfg;
    cfg.precision = p;
    cfg.scope = trial == 2 ? BankScope::per_user : BankScope::global;
    EmbeddingBank bank(FingerprintKind::dense, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      bank.append(dense_entry(testutil::random_vector(24, rng), "u" + std::to_string(i % 3), i, p));
    }
    for (int t = 0; t < 5; ++t) {
      const Fingerprint probe = DenseEmbedding(testutil::random_vector(24, rng), p);
      const std::optional<std::string> user =
          cfg.scope == BankScope::per_user ? std::optional<std::string>("u1") : std::nullopt;
      const auto a = bank.search_max(probe, user);
      const auto b = brute_force(bank, probe, user);
      EXPECT_EQ(a.score, b.score);
      EXPECT_EQ(a.best, b.best);
    }
  }
}

TEST(Bank, HashBanksEqualLinearScan) {
  std::mt19937_64 rng(5);
  EmbeddingBank bank(FingerprintKind::window_hash, {});
  auto sig = [&] {
    std::vector<std::uint64_t> e(50);
    for (auto& x : e) x = rng() % 400;
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return HashSignature::window(e, 50);
  };
  for (int i = 0; i < 2000; ++i) bank.append(BankEntry{sig(), "u", 0, std::nullopt, 0, {}});
  for (int t = 0; t < 20; ++t) {
    const Fingerprint probe = sig();
    const auto a = bank.search_max(probe);
    const auto b = brute_force(bank, probe);
    EXPECT_EQ(a.score, b.score);
    EXPECT_EQ(a.best, b.best);
  }
}

TEST(Knn, ProbeInBankIsZero) {
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  bank.append(dense_entry({3, 4}, "a"));
  EXPECT_NEAR(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{3, 4}), 1, "a"), 0.0, 1e-6);
}

TEST(Knn, TwoEntriesAtOneAndThree) {
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  bank.append(dense_entry({1, 0}, "a"));
  bank.append(dense_entry({3, 0}, "a"));
  bank.append(dense_entry({100, 0}, "b"));
  EXPECT_NEAR(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{0.0001f, 0}), 2, "a"), 2.0,
              1e-3);
  // Distances measured from (2,0): 1 and 1.
  EXPECT_NEAR(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{2, 0}), 2, "a"), 1.0, 1e-6);
}

TEST(Knn, FewerThanKUsesAll) {
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  double sum = 0.0;
  for (int i = 1; i <= 10; ++i) {
    bank.append(dense_entry({static_cast<float>(i), 0}, "a"));
    sum += i;
  }
  EXPECT_NEAR(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{0, 1e-9f}), 50, "a"),
              sum / 10.0, 1e-5);
  EXPECT_NEAR(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{0, 1e-9f}), 3, "a"), 2.0, 1e-5);
}

TEST(Knn, NoHistoryThrows) {
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  EXPECT_THROW(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{1}), 1, "x"), NoHistory);
  bank.append(dense_entry({1}, "y"));
  EXPECT_THROW(bank.knn_mean_distance(DenseEmbedding(std::vector<float>{1}), 1, "x"), NoHistory);
}

TEST(Storage, DeploymentFigures) {
  const auto s = storage_estimate(1000000, 100, 512, Precision::single);
  EXPECT_DOUBLE_EQ(s.bytes, 2.048e11);
  EXPECT_NEAR(s.gib, 190.73, 0.01);
  EXPECT_NEAR(storage_estimate(1000000, 100, 512, Precision::half).gib, 95.37, 0.01);
  EXPECT_DOUBLE_EQ(storage_estimate(1, 1, 512, Precision::single).bytes, 2048.0);
  EXPECT_THROW(storage_estimate(0, 1, 1, Precision::single), ContractViolation);
}

TEST(BankFile, SaveLoadRoundTrip) {
  BankConfig cfg;
  cfg.scope = BankScope::per_user;
  EmbeddingBank bank(FingerprintKind::dense, cfg);
  std::mt19937_64 rng(6);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < 20; ++i) {
    rows.push_back(testutil::random_vector(12, rng));
    BankEntry e = dense_entry(rows.back(), "user-" + std::to_string(i % 4), i / 4 + 1);
    if (i % 3 == 0) e.cached_output = ModelOutput{{0.25, 0.75}, 1};
    e.key = content_digest(testutil::random_image({2, 2, 1}, rng));
    bank.append(std::move(e));
  }
  const auto path = std::filesystem::temp_directory_path() / "advqdet_bank.aqde";
  bank.save(path);
  const auto loaded = EmbeddingBank::load(path, cfg);
  const auto a = bank.snapshot();
  const auto b = loaded.snapshot();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->user_id, b[i]->user_id);
    EXPECT_EQ(a[i]->seq, b[i]->seq);
    EXPECT_EQ(a[i]->cached_output, b[i]->cached_output);
    EXPECT_EQ(a[i]->key, b[i]->key);
    const auto& ea = std::get<DenseEmbedding>(a[i]->fingerprint);
    const auto& eb = std::get<DenseEmbedding>(b[i]->fingerprint);
    EXPECT_NEAR(ea.magnitude(), eb.magnitude(), 1e-5 * ea.magnitude());
    EXPECT_NEAR(cosine_similarity(ea, eb), 1.0, 1e-7);
  }
  const auto probe = DenseEmbedding(rows[5]);
  EXPECT_NEAR(loaded.knn_mean_distance(probe, 2, "user-1"), bank.knn_mean_distance(probe, 2, "user-1"),
              1e-5);
  auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  r.str(4);
  EXPECT_EQ(r.u32(), 2u);
  bytes.push_back(0);
  write_file_bytes(path, bytes);
  EXPECT_THROW(EmbeddingBank::load(path, cfg), FormatError);
  std::filesystem::remove(path);
}

TEST(BankFile, HashBankCannotBeSaved) {
  EmbeddingBank bank(FingerprintKind::window_hash, {});
  EXPECT_THROW(bank.save(std::filesystem::temp_directory_path() / "x.aqde"), ContractViolation);
}
