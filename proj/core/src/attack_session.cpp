#include "advqdet/attack_session.hpp"

#include <algorithm>

#include "advqdet/errors.hpp"

namespace advqdet {

AttackSession::AttackSession(QueryOracle oracle, ImageTensor x, int y, double epsilon,
                             std::size_t max_queries, bool record_queries, bool halt_on_flag)
    : oracle_(std::move(oracle)),
      x_(std::move(x)),
      y_(y),
      eps_(epsilon),
      max_queries_(max_queries),
      record_(record_queries),
      halt_on_flag_(halt_on_flag) {
  require(epsilon >= 0.0, "epsilon must be non-negative");
  require(max_queries >= 1, "max_queries must be at least 1");
}

const OracleResponse& AttackSession::query(const ImageTensor& q) {
  if (trace_.success || trace_.halted_on_detection || trace_.queries_used >= max_queries_) {
    throw AttackStop{};
  }
  last_ = oracle_(q);
  ++trace_.queries_used;

  QueryLogRecord rec;
  rec.seq = trace_.queries_used;
  rec.flagged = last_.flagged;
  rec.score = last_.score;
  rec.action = last_.action;
  rec.served_label = last_.output.label;
  rec.linf = linf_distance(q, x_);
  trace_.log.push_back(rec);
  if (record_) {
    trace_.queries.push_back(q);
    trace_.outputs.push_back(last_.output);
  }

  if (last_.flagged && !trace_.first_flag_index) trace_.first_flag_index = trace_.queries_used;
  if (adversarial(last_) && rec.linf <= eps_ + 1e-6) {
    trace_.success = true;
    trace_.adversarial = q;
  }
  if (last_.flagged && halt_on_flag_ && !trace_.success) trace_.halted_on_detection = true;
  return last_;
}

AttackSession::Proposal AttackSession::propose(const std::function<ImageTensor(double)>& generate,
                                               double max_scale) {
  if (!oars_.enabled) {
    Proposal p{generate(1.0), {}, 1.0};
    p.response = query(p.image);
    return p;
  }
  const double cap = std::max(1.0, max_scale);
  double scale = std::min(oars_scale_, cap);
  for (int attempt = 0;; ++attempt) {
    Proposal p{generate(scale), {}, scale};
    p.response = query(p.image);
    if (!detection_signal(p.response)) {
      oars_scale_ = std::max(1.0, scale / oars_.growth);
      return p;
    }
    if (attempt >= oars_.max_resamples) {
      ++trace_.stuck_steps;
      oars_scale_ = scale;
      return p;
    }
    scale = std::min(scale * oars_.growth, cap);
  }
}

std::vector<double> to_doubles(const ImageTensor& x) {
  const auto d = x.data();
  return {d.begin(), d.end()};
}

ImageTensor clip_to_ball(const ImageTensor& x, std::span<const double> candidate, double epsilon) {
  const auto base = x.data();
  require(candidate.size() == base.size(), "clip_to_ball: size mismatch");
  std::vector<float> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double lo = std::max(0.0, static_cast<double>(base[i]) - epsilon);
    const double hi = std::min(1.0, static_cast<double>(base[i]) + epsilon);
    out[i] = static_cast<float>(std::clamp(candidate[i], lo, hi));
  }
  return ImageTensor::clamped(x.geometry(), out);
}

}  // namespace advqdet
