#include "advqdet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <random>
#include <sstream>
#include <thread>

#include "advqdet/errors.hpp"

namespace advqdet {

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0 && nb > 0.0)) throw DegenerateInput("tradeoff: zero embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct ShardResult {
  std::vector<double> det;
  std::vector<double> fp;
};

ShardResult run_shard(const TradeoffConfig& cfg, std::size_t shard, std::size_t count) {
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + shard + 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t d = cfg.dim;
  auto draw_benign = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < d; ++i) v[i] = cfg.sigma * nd(rng) + (i == 0 ? cfg.center_norm : 0.0);
  };
  auto embed = [&](const std::vector<double>& v) {
    return cfg.encoder == TradeoffEncoder::identity ? v : cfg.external(v);
  };

  ShardResult r;
  r.det.reserve(count);
  r.fp.reserve(count);
  std::vector<double> x(d), xd(d), x2(d);
  for (std::size_t m = 0; m < count; ++m) {
    draw_benign(x);
    for (std::size_t i = 0; i < d; ++i) xd[i] = x[i] + cfg.beta * nd(rng);
    r.det.push_back(cosine(embed(x), embed(xd)));
    draw_benign(x);
    draw_benign(x2);
    r.fp.push_back(cosine(embed(x), embed(x2)));
  }
  return r;
}

double fraction_at_least(const std::vector<double>& sorted, double mu) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), mu);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

}  // namespace

std::string_view to_string(TradeoffEncoder e) { return e == TradeoffEncoder::identity ? "identity" : "external"; }

TradeoffEncoder tradeoff_encoder_from_string(std::string_view s) {
  if (s == "identity") return TradeoffEncoder::identity;
  if (s == "external") return TradeoffEncoder::external;
  throw ConfigError("unknown tradeoff encoder '" + std::string(s) + "'");
}

void TradeoffConfig::validate() const {
  if (dim < 1) throw ConfigError("tradeoff dim must be positive");
  if (!(sigma > 0.0) || !(beta > 0.0)) throw ConfigError("tradeoff sigma and beta must be positive");
  if (samples < 1000) throw ConfigError("tradeoff needs at least 1000 samples");
  if (shards < 1) throw ConfigError("tradeoff needs at least one shard");
  if (encoder == TradeoffEncoder::external && !external) {
    throw ConfigError("external tradeoff encoder needs an embedding function");
  }
}

std::vector<double> TradeoffConfig::grid() const {
  if (!thresholds.empty()) return thresholds;
  std::vector<double> g;
  for (int k = -20; k <= 20; ++k) g.push_back(k / 20.0);
  return g;
}

std::vector<TradeoffPoint> tradeoff_curve(const TradeoffConfig& cfg) {
  cfg.validate();
  const std::size_t shards = std::min(cfg.shards, cfg.samples);
  std::vector<std::size_t> counts(shards, cfg.samples / shards);
  for (std::size_t s = 0; s < cfg.samples % shards; ++s) ++counts[s];

  std::vector<ShardResult> parts(shards);
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t base = 0; base < shards; base += workers) {
    std::vector<std::future<ShardResult>> jobs;
    for (std::size_t s = base; s < std::min(shards, base + workers); ++s) {
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                run_shard, std::cref(cfg), s, counts[s]));
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) parts[base + k] = jobs[k].get();
  }

  std::vector<double> det, fp;
  for (auto& p : parts) {
    det.insert(det.end(), p.det.begin(), p.det.end());
    fp.insert(fp.end(), p.fp.begin(), p.fp.end());
  }
  std::sort(det.begin(), det.end());
  std::sort(fp.begin(), fp.end());

  std::vector<TradeoffPoint> curve;
  for (double mu : cfg.grid()) curve.push_back({mu, fraction_at_least(det, mu), fraction_at_least(fp, mu)});
  return curve;
}

std::string tradeoff_csv(const std::vector<TradeoffPoint>& curve) {
  std::ostringstream os;
  os << "mu,alpha_det,alpha_fp\n";
  char line[96];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof line, "%.6g,%.6f,%.6f\n", p.mu, p.alpha_det, p.alpha_fp);
    os << line;
  }
  return os.str();
}

}  // namespace advqdet
