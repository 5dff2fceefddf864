#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advqdet/attacks.hpp"
#include "advqdet/detector.hpp"
#include "advqdet/synthetic.hpp"

namespace advqdet {

enum class Interleave { sequential, round_robin };

std::string_view to_string(Interleave i);
Interleave interleave_from_string(std::string_view s);

struct AttackPlan {
  AttackConfig attack;
  std::size_t instances = 100;
  std::size_t users = 1;  // split each instance's queries round-robin over this many user ids
};

struct BenignConfig {
  std::size_t count = 0;
  std::size_t users = 10;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  SyntheticTaskConfig task;
  std::optional<DetectorConfig> detector;  // undefended when unset
  std::vector<AttackPlan> attacks;
  BenignConfig benign;
  std::uint64_t seed = 0;  // picks the attacked images; shared by all plans
  // Defaults to true for defended runs whose action is not pass-through.
  std::optional<bool> halt_on_detection;
  // Give every attack instance its own empty detector; benign traffic then
  // runs through a separate one.
  bool fresh_detector_per_instance = false;
  Interleave interleave = Interleave::round_robin;
  std::string trace_log;  // JSON lines; empty to skip
  std::string csv;        // metrics table; empty to skip

  void validate() const;
  bool halts() const;
};

struct BenignVerdict {
  std::string user_id;
  bool flagged = false;
  double score = 0.0;
};

struct AttackMetrics {
  std::string attack;
  std::size_t attempts = 0;
  std::size_t successes = 0;
  double asr = 0.0;
  std::map<int, double> k_shot_dr;  // k -> fraction with first_flag_index <= k
  std::optional<double> mdc;        // over detected traces only
  std::size_t detected = 0;
  std::size_t undetected = 0;
  double mean_queries = 0.0;
  double median_queries = 0.0;
};

struct MetricsReport {
  std::vector<AttackMetrics> attacks;
  std::size_t benign_total = 0;
  std::size_t benign_flagged = 0;
  std::optional<double> fpr;  // unset when there was no benign traffic
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<AttackTrace> traces;
  std::vector<BenignVerdict> benign;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

MetricsReport compute_metrics(const std::vector<AttackTrace>& traces,
                              const std::vector<BenignVerdict>& benign,
                              const std::vector<int>& shots = {3, 5});

std::vector<QueryRecord> generate_benign_traffic(const SyntheticTask& task, const BenignConfig& cfg);

// Max bank similarity seen by the first n queries of a trace.
std::vector<double> similarity_curve(const AttackTrace& trace, std::size_t n = 50);

std::string format_table(const MetricsReport& report);
// attack,attempts,ASR,3-shot DR,5-shot DR,mDC,detected,undetected,mean queries,FPR
// with a trailing "benign" row carrying the flagged count and FPR.
std::string format_csv(const MetricsReport& report);

}  // namespace advqdet
