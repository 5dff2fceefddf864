#include "advqdet/detector.hpp"

#include <limits>

#include "advqdet/errors.hpp"

namespace advqdet {

namespace {

FingerprintKind kind_for(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::pixel_hash:
      return FingerprintKind::window_hash;
    case EncoderVariant::perceptual_hash:
      return FingerprintKind::perceptual_bits;
    default:
      return FingerprintKind::dense;
  }
}

}  // namespace

std::string_view to_string(DetectionMode m) { return m == DetectionMode::threshold ? "threshold" : "sd-knn"; }

std::string_view to_string(DefenseAction a) {
  switch (a) {
    case DefenseAction::pass_through:
      return "pass-through";
    case DefenseAction::reject:
      return "reject";
    case DefenseAction::return_cache:
      return "return-cache";
    case DefenseAction::rate_limit:
      return "rate-limit";
  }
  return "?";
}

DetectionMode detection_mode_from_string(std::string_view s) {
  if (s == "threshold") return DetectionMode::threshold;
  if (s == "sd-knn") return DetectionMode::sd_knn;
  throw ConfigError("unknown detection mode '" + std::string(s) + "'");
}

DefenseAction defense_action_from_string(std::string_view s) {
  if (s == "pass-through") return DefenseAction::pass_through;
  if (s == "reject") return DefenseAction::reject;
  if (s == "return-cache") return DefenseAction::return_cache;
  if (s == "rate-limit") return DefenseAction::rate_limit;
  throw ConfigError("unknown defense action '" + std::string(s) + "'");
}

DetectorConfig DetectorConfig::defaults(EncoderVariant variant, const Geometry& geometry) {
  DetectorConfig c;
  c.encoder = EncoderConfig::defaults(variant, geometry);
  const bool dense = variant == EncoderVariant::external || variant == EncoderVariant::toy_dense;
  if (variant == EncoderVariant::pixel_hash) {
    c.threshold = 0.49;  // at least 25 of 50 hashes shared
  } else {
    c.threshold = dense && geometry.max_side() > 64 ? 0.90 : 0.95;
  }
  return c;
}

DetectorConfig DetectorConfig::sd_baseline(const Geometry& geometry) {
  DetectorConfig c = defaults(EncoderVariant::toy_dense, geometry);
  c.mode = DetectionMode::sd_knn;
  c.bank.scope = BankScope::per_user;
  c.knn_k = 50;
  c.knn_distance = 10.0;
  return c;
}

void DetectorConfig::validate() const {
  encoder.validate();
  bank.validate();
  if (mode == DetectionMode::threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in (0, 1]");
  } else {
    if (kind_for(encoder.variant) != FingerprintKind::dense) {
      throw ConfigError("sd-knn mode requires a dense encoder");
    }
    if (bank.scope != BankScope::per_user) throw ConfigError("sd-knn mode requires per-user scope");
    if (knn_k < 1) throw ConfigError("knn_k must be at least 1");
    if (!(knn_distance > 0.0)) throw ConfigError("knn_distance must be positive");
  }
  if (action == DefenseAction::rate_limit && rate_limit_flags < 1) {
    throw ConfigError("rate_limit_flags must be at least 1");
  }
}

ModelOutput refusal_output() { return ModelOutput{{}, -1}; }

bool is_refusal(const ModelOutput& out) { return out.label < 0 && out.probs.empty(); }

Detector::Detector(DetectorConfig config)
    : Detector(config, nullptr) {}

Detector::Detector(DetectorConfig config, std::unique_ptr<Encoder> encoder)
    : cfg_((config.validate(), config)),
      encoder_(encoder ? std::move(encoder) : make_encoder(config.encoder)),
      bank_(encoder_->kind(), config.bank) {}

bool Detector::rate_limited(const std::string& user, std::int64_t now_ms) {
  auto& times = flag_times_[user];
  times.push_back(now_ms);
  while (!times.empty() && times.front() <= now_ms - cfg_.rate_limit_window_ms) times.pop_front();
  return times.size() >= cfg_.rate_limit_flags;
}

Verdict Detector::detect_and_serve(const QueryRecord& q, const TargetModel& target) {
  std::lock_guard lock(mu_);
  Fingerprint fp = encoder_->encode(q.image);

  Verdict v;
  if (cfg_.mode == DetectionMode::threshold) {
    auto found = bank_.search_max(fp, std::string_view(q.user_id));
    v.score = found.score;
    v.matched = found.best;
    v.flagged = found.found() && found.score > cfg_.threshold;
  } else {
    const auto& probe = std::get<DenseEmbedding>(fp);
    if (bank_.user_size(q.user_id) >= cfg_.knn_k) {
      v.score = bank_.knn_mean_distance(probe, cfg_.knn_k, q.user_id);
      v.flagged = v.score < cfg_.knn_distance;
      if (v.flagged) v.matched = bank_.search_max(fp, std::string_view(q.user_id)).best;
    } else {
      v.score = std::numeric_limits<double>::infinity();
    }
  }

  std::optional<ModelOutput> to_cache;
  v.action_taken = v.flagged ? cfg_.action : DefenseAction::pass_through;
  if (v.flagged && cfg_.action == DefenseAction::return_cache && v.matched &&
      v.matched->cached_output) {
    v.served_output = *v.matched->cached_output;
    v.from_cache = true;
    to_cache = v.served_output;
  } else {
    ModelOutput out = target.predict(q.image);
    v.target_queried = true;
    to_cache = out;
    bool refuse = false;
    if (v.flagged && cfg_.action == DefenseAction::reject) refuse = true;
    if (v.flagged && cfg_.action == DefenseAction::rate_limit) {
      refuse = rate_limited(q.user_id, q.timestamp_ms);
    }
    if (refuse) {
      v.served_output = refusal_output();
      v.refused = true;
    } else {
      v.served_output = std::move(out);
    }
  }

  if (!v.flagged || cfg_.append_flagged) {
    BankEntry e{std::move(fp), q.user_id, q.seq, std::move(to_cache), 0, content_digest(q.image)};
    v.insert_index = bank_.append(std::move(e));
  }
  return v;
}

std::vector<Verdict> Detector::detect_batch(const std::vector<QueryRecord>& queries,
                                            const TargetModel& target,
                                            std::vector<Verdict>* partial) {
  std::vector<Verdict> out;
  out.reserve(queries.size());
  try {
    for (const auto& q : queries) out.push_back(detect_and_serve(q, target));
  } catch (...) {
    if (partial) *partial = std::move(out);
    throw;
  }
  return out;
}

}  // namespace advqdet
