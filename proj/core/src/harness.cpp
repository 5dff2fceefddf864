#include "advqdet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/trace_log.hpp"

namespace advqdet {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Feeds attack and benign streams through one detector with a shared clock
// and per-user sequence counters.
class TrafficMux {
 public:
  TrafficMux(const ExperimentConfig& cfg, const TargetModel& victim)
      : cfg_(cfg), victim_(victim) {}

  OracleResponse attack_query(Detector* det, const std::string& user, const ImageTensor& q) {
    if (cfg_.interleave == Interleave::round_robin && det == shared_) pump_benign(1);
    return serve(det, user, q);
  }

  void set_benign(std::vector<QueryRecord> queue, Detector* det) {
    benign_queue_ = std::deque<QueryRecord>(std::make_move_iterator(queue.begin()),
                                            std::make_move_iterator(queue.end()));
    benign_det_ = det;
  }
  void set_shared(Detector* det) { shared_ = det; }

  void pump_benign(std::size_t n) {
    for (std::size_t k = 0; k < n && !benign_queue_.empty(); ++k) {
      QueryRecord q = std::move(benign_queue_.front());
      benign_queue_.pop_front();
      auto r = serve(benign_det_, q.user_id, q.image);
      benign_.push_back({q.user_id, r.flagged, r.score});
    }
  }
  void drain_benign() { pump_benign(benign_queue_.size()); }

  std::vector<BenignVerdict> take_benign() { return std::move(benign_); }

 private:
  OracleResponse serve(Detector* det, const std::string& user, const ImageTensor& image) {
    OracleResponse r;
    ++clock_;
    if (!det) {
      r.output = victim_.predict(image);
      return r;
    }
    QueryRecord q{user, ++seq_[user], image, clock_};
    const Verdict v = det->detect_and_serve(q, victim_);
    r.output = v.served_output;
    r.refused = v.refused;
    r.from_cache = v.from_cache;
    r.flagged = v.flagged;
    r.score = v.score;
    r.action = std::string(to_string(v.action_taken));
    return r;
  }

  const ExperimentConfig& cfg_;
  const TargetModel& victim_;
  Detector* shared_ = nullptr;
  Detector* benign_det_ = nullptr;
  std::deque<QueryRecord> benign_queue_;
  std::vector<BenignVerdict> benign_;
  std::unordered_map<std::string, std::uint64_t> seq_;
  std::int64_t clock_ = 0;
};

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

std::string_view to_string(Interleave i) { return i == Interleave::sequential ? "sequential" : "round-robin"; }

Interleave interleave_from_string(std::string_view s) {
  if (s == "sequential") return Interleave::sequential;
  if (s == "round-robin") return Interleave::round_robin;
  throw ConfigError("unknown interleave policy '" + std::string(s) + "'");
}

void ExperimentConfig::validate() const {
  task.validate();
  if (detector) detector->validate();
  std::size_t instances = 0;
  for (const auto& p : attacks) {
    p.attack.validate();
    if (p.users < 1) throw ConfigError("attack plan needs at least one user id");
    instances += p.instances;
  }
  if (instances == 0 && benign.count == 0) {
    throw ConfigError("experiment needs at least one attack instance or one benign query");
  }
  if (benign.count > 0 && benign.users < 1) throw ConfigError("benign traffic needs at least one user");
}

bool ExperimentConfig::halts() const {
  if (halt_on_detection) return *halt_on_detection;
  return detector && detector->action != DefenseAction::pass_through;
}

std::vector<QueryRecord> generate_benign_traffic(const SyntheticTask& task, const BenignConfig& cfg) {
  std::vector<QueryRecord> out;
  out.reserve(cfg.count);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t k = 0; k < cfg.count; ++k) {
    QueryRecord q{"benign-" + std::to_string(k % std::max<std::size_t>(cfg.users, 1)),
                  k / std::max<std::size_t>(cfg.users, 1) + 1, task.sample(rng).image,
                  static_cast<std::int64_t>(k)};
    out.push_back(std::move(q));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  SyntheticTask task(cfg.task);
  const TargetModel victim = task.victim();
  const bool halt = cfg.halts();

  std::unique_ptr<Detector> shared;
  std::unique_ptr<Detector> benign_det;
  if (cfg.detector) {
    shared = std::make_unique<Detector>(*cfg.detector);
    if (cfg.fresh_detector_per_instance) benign_det = std::make_unique<Detector>(*cfg.detector);
  }

  std::unique_ptr<ToyFeatureEncoder> toy;
  {
    const auto& ec = cfg.detector ? cfg.detector->encoder : EncoderConfig{};
    toy = std::make_unique<ToyFeatureEncoder>(ec.toy_pool, ec.toy_gain);
  }

  TrafficMux mux(cfg, victim);
  mux.set_shared(shared.get());
  mux.set_benign(generate_benign_traffic(task, cfg.benign),
                 cfg.fresh_detector_per_instance ? benign_det.get() : shared.get());
  if (cfg.interleave == Interleave::sequential) mux.drain_benign();

  ExperimentResult result;
  for (std::size_t j = 0; j < cfg.attacks.size(); ++j) {
    const auto& plan = cfg.attacks[j];
    for (std::size_t i = 0; i < plan.instances; ++i) {
      std::mt19937_64 img_rng(mix(cfg.seed, i));
      const auto sample = task.sample_correct(victim, img_rng);

      std::unique_ptr<Detector> own;
      Detector* det = shared.get();
      if (cfg.detector && cfg.fresh_detector_per_instance) {
        own = std::make_unique<Detector>(*cfg.detector);
        det = own.get();
      }
      const std::string prefix = "attack" + std::to_string(j) + "-" + std::to_string(i) + "-u";
      std::size_t issued = 0;
      QueryOracle oracle = [&](const ImageTensor& q) {
        const std::string user = prefix + std::to_string(issued++ % plan.users);
        return mux.attack_query(det, user, q);
      };

      AttackConfig acfg = plan.attack;
      acfg.seed = plan.attack.seed + i;
      RunOptions opts;
      opts.halt_on_flag = halt && cfg.detector.has_value();
      opts.encoder = toy.get();
      auto trace = run_attack(acfg, oracle, sample.image, sample.label, opts);

      if (trace.success) {
        const auto& adv = *trace.adversarial;
        trace.success = victim.predict_label(adv) != sample.label &&
                        linf_distance(adv, sample.image) <= acfg.epsilon + 1e-6;
      }
      result.traces.push_back(std::move(trace));
    }
  }
  mux.drain_benign();
  result.benign = mux.take_benign();
  result.report = compute_metrics(result.traces, result.benign);

  if (!cfg.trace_log.empty()) write_trace_log(cfg.trace_log, result.traces, result.benign);
  if (!cfg.csv.empty()) {
    const auto csv = format_csv(result.report);
    write_file_bytes(cfg.csv, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  }
  return result;
}

MetricsReport compute_metrics(const std::vector<AttackTrace>& traces,
                              const std::vector<BenignVerdict>& benign,
                              const std::vector<int>& shots) {
  MetricsReport report;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const AttackTrace*>> groups;
  for (const auto& t : traces) {
    auto [it, inserted] = groups.try_emplace(t.attack);
    if (inserted) order.push_back(t.attack);
    it->second.push_back(&t);
  }
  for (const auto& name : order) {
    const auto& group = groups[name];
    AttackMetrics m;
    m.attack = name;
    m.attempts = group.size();
    double flag_sum = 0.0;
    std::vector<double> used;
    for (const auto* t : group) {
      if (t->success) ++m.successes;
      used.push_back(static_cast<double>(t->queries_used));
      if (t->first_flag_index) {
        ++m.detected;
        flag_sum += static_cast<double>(*t->first_flag_index);
      }
    }
    m.undetected = m.attempts - m.detected;
    m.asr = static_cast<double>(m.successes) / static_cast<double>(m.attempts);
    for (int k : shots) {
      std::size_t hit = 0;
      for (const auto* t : group) {
        if (t->first_flag_index && *t->first_flag_index <= static_cast<std::size_t>(k)) ++hit;
      }
      m.k_shot_dr[k] = static_cast<double>(hit) / static_cast<double>(m.attempts);
    }
    if (m.detected > 0) m.mdc = flag_sum / static_cast<double>(m.detected);
    double total = 0.0;
    for (double u : used) total += u;
    m.mean_queries = total / static_cast<double>(used.size());
    std::sort(used.begin(), used.end());
    const std::size_t n = used.size();
    m.median_queries = n % 2 ? used[n / 2] : 0.5 * (used[n / 2 - 1] + used[n / 2]);
    report.attacks.push_back(std::move(m));
  }
  report.benign_total = benign.size();
  for (const auto& b : benign) report.benign_flagged += b.flagged ? 1 : 0;
  if (!benign.empty()) {
    report.fpr = static_cast<double>(report.benign_flagged) / static_cast<double>(benign.size());
  }
  return report;
}

std::vector<double> similarity_curve(const AttackTrace& trace, std::size_t n) {
  std::vector<double> out;
  for (std::size_t i = 0; i < trace.log.size() && i < n; ++i) out.push_back(trace.log[i].score);
  return out;
}

std::string format_table(const MetricsReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %8s %7s %8s %8s %7s %9s %11s\n", "attack", "attempts",
                "ASR", "3-shot", "5-shot", "mDC", "detected", "mean-query");
  os << line;
  for (const auto& m : report.attacks) {
    auto dr = [&m](int k) {
      auto it = m.k_shot_dr.find(k);
      return it == m.k_shot_dr.end() ? std::string("-") : fmt(100.0 * it->second, 1) + "%";
    };
    std::snprintf(line, sizeof line, "%-18s %8zu %6.1f%% %8s %8s %7s %4zu/%-4zu %11.1f\n",
                  m.attack.c_str(), m.attempts, 100.0 * m.asr, dr(3).c_str(), dr(5).c_str(),
                  m.mdc ? fmt(*m.mdc, 2).c_str() : "n/a", m.detected, m.attempts, m.mean_queries);
    os << line;
  }
  if (report.fpr) {
    os << "benign: " << report.benign_flagged << "/" << report.benign_total
       << " flagged, FPR " << fmt(100.0 * *report.fpr, 2) << "%\n";
  } else {
    os << "benign: n=0\n";
  }
  return os.str();
}

std::string format_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "attack,attempts,ASR,3-shot DR,5-shot DR,mDC,detected,undetected,mean queries,FPR\n";
  for (const auto& m : report.attacks) {
    auto dr = [&m](int k) {
      auto it = m.k_shot_dr.find(k);
      return it == m.k_shot_dr.end() ? std::string() : fmt(it->second, 4);
    };
    os << m.attack << ',' << m.attempts << ',' << fmt(m.asr, 4) << ',' << dr(3) << ',' << dr(5) << ','
       << (m.mdc ? fmt(*m.mdc, 4) : std::string()) << ',' << m.detected << ',' << m.undetected << ','
       << fmt(m.mean_queries, 2) << ",\n";
  }
  if (report.fpr) {
    os << "benign," << report.benign_total << ",,,,," << report.benign_flagged << ','
       << report.benign_total - report.benign_flagged << ",," << fmt(*report.fpr, 4) << '\n';
  }
  return os.str();
}

}  // namespace advqdet
