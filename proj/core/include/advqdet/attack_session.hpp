#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advqdet/image.hpp"
#include "advqdet/target_model.hpp"

namespace advqdet {

// What an attack gets back for one query. `flagged` and `score` are ground
// truth for logging only; attacks may look at `refused` and `from_cache`,
// which are the observable detection signal.
struct OracleResponse {
  ModelOutput output;
  bool refused = false;
  bool from_cache = false;
  bool flagged = false;
  double score = 0.0;
  std::string action = "pass-through";
};

using QueryOracle = std::function<OracleResponse(const ImageTensor&)>;

struct QueryLogRecord {
  std::uint64_t seq = 0;  // 1-based query count
  bool flagged = false;
  double score = 0.0;
  std::string action;
  int served_label = 0;
  double linf = 0.0;  // distance to the clean input
};

struct AttackTrace {
  std::string attack;
  std::uint64_t seed = 0;
  std::vector<ImageTensor> queries;   // filled when recording is on
  std::vector<ModelOutput> outputs;   // filled when recording is on
  std::vector<QueryLogRecord> log;
  bool success = false;
  std::size_t queries_used = 0;
  std::optional<std::size_t> first_flag_index;
  std::optional<ImageTensor> adversarial;
  // False for decision-based attacks, whose initial point lies outside the ball.
  bool ball_constrained = true;
  bool init_failed = false;
  bool halted_on_detection = false;
  std::size_t stuck_steps = 0;  // OARS steps whose every resample was flagged
};

struct OarsSettings {
  bool enabled = false;
  double growth = 1.5;
  int max_resamples = 10;
};

// Budgeted, accounted access to the oracle for one attack instance.
//
// The session ends the attack (by throwing AttackStop out of query) when the
// budget is spent, when the detector flags and halting is requested, or on
// the first query issued after success. Success means a served label other
// than y for a query inside the epsilon ball.
class AttackSession {
 public:
  struct AttackStop {};

  AttackSession(QueryOracle oracle, ImageTensor x, int y, double epsilon, std::size_t max_queries,
                bool record_queries = true, bool halt_on_flag = false);

  const ImageTensor& clean() const { return x_; }
  int label() const { return y_; }
  double epsilon() const { return eps_; }
  std::size_t used() const { return trace_.queries_used; }
  std::size_t remaining() const { return max_queries_ - trace_.queries_used; }
  bool succeeded() const { return trace_.success; }

  const OracleResponse& query(const ImageTensor& q);

  // True when the response carries the observable detection signal.
  static bool detection_signal(const OracleResponse& r) { return r.refused || r.from_cache; }
  // Served label differs from y and the response is not a refusal.
  bool adversarial(const OracleResponse& r) const { return !r.refused && r.output.label != y_; }

  // OARS hook. Without OARS this is query(generate(1.0)). With it, a
  // proposal that draws a detection signal is regenerated at a scale grown
  // by `growth` (capped at max_scale) up to max_resamples times; an
  // unflagged response anneals the scale back toward 1.
  struct Proposal {
    ImageTensor image;
    OracleResponse response;
    double scale = 1.0;
  };
  Proposal propose(const std::function<ImageTensor(double scale)>& generate, double max_scale);

  void set_oars(OarsSettings s) { oars_ = s; }
  void mark_init_failed() { trace_.init_failed = true; }
  void set_ball_constrained(bool b) { trace_.ball_constrained = b; }
  AttackTrace& trace() { return trace_; }
  AttackTrace finish() { return std::move(trace_); }

 private:
  QueryOracle oracle_;
  ImageTensor x_;
  int y_;
  double eps_;
  std::size_t max_queries_;
  bool record_;
  bool halt_on_flag_;
  OarsSettings oars_;
  double oars_scale_ = 1.0;
  OracleResponse last_;
  AttackTrace trace_;
};

// Projection onto the epsilon ball around x intersected with [0,1].
ImageTensor clip_to_ball(const ImageTensor& x, std::span<const double> candidate, double epsilon);
std::vector<double> to_doubles(const ImageTensor& x);

}  // namespace advqdet
