#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advqdet/bank.hpp"
#include "advqdet/encoders.hpp"
#include "advqdet/query.hpp"
#include "advqdet/target_model.hpp"

namespace advqdet {

enum class DetectionMode { threshold, sd_knn };
enum class DefenseAction { pass_through, reject, return_cache, rate_limit };

std::string_view to_string(DetectionMode m);
std::string_view to_string(DefenseAction a);
DetectionMode detection_mode_from_string(std::string_view s);
DefenseAction defense_action_from_string(std::string_view s);

struct DetectorConfig {
  EncoderConfig encoder;
  BankConfig bank;
  double threshold = 0.95;  // similarity mu; flag when score > threshold
  DetectionMode mode = DetectionMode::threshold;
  std::size_t knn_k = 50;
  double knn_distance = 10.0;  // sd-knn flags when mean distance < knn_distance
  DefenseAction action = DefenseAction::return_cache;
  bool append_flagged = true;
  // rate-limit: refuse once a user has rate_limit_flags flags inside the
  // last rate_limit_window_ms milliseconds.
  std::size_t rate_limit_flags = 3;
  std::int64_t rate_limit_window_ms = 60000;

  static DetectorConfig defaults(EncoderVariant variant, const Geometry& geometry);
  // Per-user dense detector with k = 50 neighbours and distance threshold 10.
  static DetectorConfig sd_baseline(const Geometry& geometry);
  void validate() const;
};

struct Verdict {
  bool flagged = false;
  double score = 0.0;  // max similarity, or mean k-NN distance in sd-knn mode
  EntryRef matched;
  DefenseAction action_taken = DefenseAction::pass_through;
  ModelOutput served_output;
  bool refused = false;         // served_output is the refusal marker
  bool from_cache = false;      // served_output was replayed from the bank
  bool target_queried = false;
  std::optional<std::uint64_t> insert_index;
};

// Refusal marker: no probabilities and label -1.
ModelOutput refusal_output();
bool is_refusal(const ModelOutput& out);

// Encode, search, threshold, act, append. Calls are linearizable: each one
// runs under the detector lock, so concurrent callers see some sequential order.
class Detector {
 public:
  explicit Detector(DetectorConfig config);
  Detector(DetectorConfig config, std::unique_ptr<Encoder> encoder);

  const DetectorConfig& config() const { return cfg_; }
  const EmbeddingBank& bank() const { return bank_; }
  const Encoder& encoder() const { return *encoder_; }

  Verdict detect_and_serve(const QueryRecord& q, const TargetModel& target);
  // Fold of detect_and_serve. On error the verdicts produced so far are kept
  // in `partial` before the exception propagates.
  std::vector<Verdict> detect_batch(const std::vector<QueryRecord>& queries,
                                    const TargetModel& target,
                                    std::vector<Verdict>* partial = nullptr);

 private:
  bool rate_limited(const std::string& user, std::int64_t now_ms);

  DetectorConfig cfg_;
  std::unique_ptr<Encoder> encoder_;
  EmbeddingBank bank_;
  std::mutex mu_;
  std::unordered_map<std::string, std::deque<std::int64_t>> flag_times_;
};

}  // namespace advqdet
