#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace advqdet {

enum class TradeoffEncoder { identity, external };

std::string_view to_string(TradeoffEncoder e);
TradeoffEncoder tradeoff_encoder_from_string(std::string_view s);

// Benign queries x ~ N(p, sigma^2 I) with p = center_norm * e_1, attack
// perturbations delta ~ N(0, beta^2 I).
struct TradeoffConfig {
  std::size_t dim = 64;
  double sigma = 1.0;
  double beta = 0.1;
  double center_norm = 0.0;
  std::vector<double> thresholds;  // empty: -1, -0.95, ..., 1
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  std::size_t shards = 8;
  TradeoffEncoder encoder = TradeoffEncoder::identity;
  // Maps a d-vector to its embedding; required for the external encoder.
  std::function<std::vector<double>(std::span<const double>)> external;

  void validate() const;
  std::vector<double> grid() const;
};

struct TradeoffPoint {
  double mu = 0.0;
  double alpha_det = 0.0;  // P[sim(E(x), E(x + delta)) >= mu]
  double alpha_fp = 0.0;   // P[sim(E(x1), E(x2)) >= mu]
};

// Monte Carlo estimate per threshold. Each shard draws from its own seed and
// the shards are merged in index order, so the result does not depend on how
// many threads run them.
std::vector<TradeoffPoint> tradeoff_curve(const TradeoffConfig& cfg);

// "mu,alpha_det,alpha_fp" header plus one row per point.
std::string tradeoff_csv(const std::vector<TradeoffPoint>& curve);

}  // namespace advqdet
