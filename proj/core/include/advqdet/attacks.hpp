#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "advqdet/attack_session.hpp"
#include "advqdet/toy_encoder.hpp"

namespace advqdet {

enum class AttackKind { zoo, nes, square, boundary, hsja, duplicate, whitebox };

std::string_view to_string(AttackKind k);
AttackKind attack_kind_from_string(std::string_view s);
bool is_decision_based(AttackKind k);

struct AttackConfig {
  AttackKind kind = AttackKind::square;
  double epsilon = 0.05;
  std::size_t max_queries = 10000;
  double step_size = 0.01;  // sign-step size for zoo and nes
  std::uint64_t seed = 0;

  int zoo_batch = 64;  // coordinates per iteration
  double zoo_h = 1e-4;

  int nes_population = 50;  // even; antithetic pairs
  double nes_sigma = 1e-3;

  double square_p_init = 0.8;

  int init_draws = 1000;  // decision-based random initialisation
  double boundary_spherical_step = 0.01;
  double boundary_source_step = 0.01;
  double boundary_step_adapt = 1.5;

  int hsja_init_evals = 100;
  int hsja_max_evals = 1000;
  double hsja_gamma = 1.0;

  OarsSettings oars;

  int whitebox_pgd_steps = 10;
  double whitebox_pgd_step = 0.01;

  void validate() const;
};

struct RunOptions {
  bool record_queries = false;
  bool halt_on_flag = false;
  // Differentiable encoder for the white-box attack.
  const ToyFeatureEncoder* encoder = nullptr;
};

AttackTrace run_attack(const AttackConfig& cfg, const QueryOracle& oracle, const ImageTensor& x,
                       int y, const RunOptions& options = {});

// Same attack with OARS feedback handling switched on.
AttackConfig wrap_oars(AttackConfig inner, double growth = 1.5, int max_resamples = 10);

// Losses read from a served output; nullopt when the output carries no scores.
std::optional<double> cross_entropy_loss(const ModelOutput& out, int y);
std::optional<double> margin_loss(const ModelOutput& out, int y);

// Square-attack fraction-of-pixels schedule, halving at fixed points of a
// 10000-iteration budget rescaled to `budget`.
double square_p_selection(double p_init, std::size_t iteration, std::size_t budget);

// Building blocks exposed for testing on small problems.
using VectorLoss = std::function<double(std::span<const double>)>;
using VectorDecision = std::function<bool(std::span<const double>)>;

// Antithetic NES: (1 / (sigma n)) sum_i [l(x + sigma u_i) - l(x - sigma u_i)] u_i over n/2 pairs.
std::vector<double> nes_gradient_estimate(const VectorLoss& loss, std::span<const double> x,
                                          double sigma, int population, std::mt19937_64& rng);

// Symmetric finite difference of `loss` along coordinate i.
double zoo_coordinate_estimate(const VectorLoss& loss, std::span<const double> x, std::size_t i,
                               double h);

struct BoundarySearch {
  std::vector<double> point;  // adversarial side of the final bracket
  double low = 0.0;           // blend weights toward the adversarial input
  double high = 1.0;
  std::size_t queries = 0;
};

// Bisection on (1 - a) clean + a adversarial until high - low <= tolerance.
BoundarySearch binary_search_boundary(const VectorDecision& is_adversarial,
                                      std::span<const double> clean,
                                      std::span<const double> adversarial, double tolerance);

// Unit-norm Monte Carlo estimate of the boundary normal at `boundary_point`
// from `probes` boolean decisions at radius delta.
std::vector<double> hsja_estimate_direction(const VectorDecision& is_adversarial,
                                            std::span<const double> boundary_point, double delta,
                                            int probes, std::mt19937_64& rng);

// One projected sign-gradient step sequence lowering cos(E(z), reference).
// Returns the similarity after each accepted step, starting with the initial value.
struct PgdResult {
  std::vector<double> image;
  std::vector<double> similarities;
};
PgdResult pgd_lower_similarity(const ToyFeatureEncoder& encoder, const ImageTensor& start,
                               const ImageTensor& reference, const ImageTensor& clean,
                               double epsilon, int steps, double step);

}  // namespace advqdet
