#include "advqdet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "advqdet/errors.hpp"

namespace advqdet {

namespace {

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

std::vector<double> clip01(std::vector<double> v) {
  for (auto& e : v) e = std::clamp(e, 0.0, 1.0);
  return v;
}

ImageTensor as_image(const Geometry& g, std::span<const double> v) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  return ImageTensor::clamped(g, f);
}

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> u(n);
  for (auto& v : u) v = nd(rng);
  return u;
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

constexpr double kInf = std::numeric_limits<double>::infinity();

// Adapts a session to the vector-level building blocks.
struct SessionView {
  AttackSession& s;
  Geometry g;

  bool adversarial(std::span<const double> v) { return s.adversarial(s.query(as_image(g, v))); }
};

void run_zoo(AttackSession& s, const AttackConfig& cfg, std::mt19937_64& rng) {
  const auto& x = s.clean();
  const std::size_t d = x.size();
  const auto y = s.label();
  auto cur = to_doubles(x);
  s.query(x);

  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.zoo_batch), d);
  const double max_scale = cfg.epsilon > 0 ? std::max(1.0, cfg.epsilon / cfg.zoo_h) : 1.0;

  for (;;) {
    for (std::size_t k = 0; k < batch; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, d - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    std::vector<double> g(batch, 0.0);
    for (std::size_t k = 0; k < batch; ++k) {
      const std::size_t i = idx[k];
      double moved[2] = {0.0, 0.0};
      std::optional<double> losses[2];
      for (int side = 0; side < 2; ++side) {
        const double dir = side == 0 ? 1.0 : -1.0;
        auto gen = [&](double scale) {
          auto probe = cur;
          probe[i] += dir * cfg.zoo_h * scale;
          return clip_to_ball(x, probe, cfg.epsilon);
        };
        auto p = s.propose(gen, max_scale);
        moved[side] = static_cast<double>(p.image.data()[i]) - cur[i];
        losses[side] = cross_entropy_loss(p.response.output, y);
      }
      const double span = moved[0] - moved[1];
      if (losses[0] && losses[1] && span > 0) g[k] = (*losses[0] - *losses[1]) / span;
    }
    for (std::size_t k = 0; k < batch; ++k) cur[idx[k]] += cfg.step_size * sign(g[k]);
    const auto next = clip_to_ball(x, cur, cfg.epsilon);
    cur = to_doubles(next);
    s.query(next);
  }
}

void run_nes(AttackSession& s, const AttackConfig& cfg, std::mt19937_64& rng) {
  const auto& x = s.clean();
  const std::size_t d = x.size();
  const auto y = s.label();
  auto cur = to_doubles(x);
  s.query(x);
  const int pairs = std::max(1, cfg.nes_population / 2);
  const double max_scale = cfg.epsilon > 0 ? std::max(1.0, cfg.epsilon / cfg.nes_sigma) : 1.0;

  for (;;) {
    std::vector<double> g(d, 0.0);
    for (int k = 0; k < pairs; ++k) {
      std::vector<double> u;
      double used_scale = 1.0;
      for (int side = 0; side < 2; ++side) {
        const double dir = side == 0 ? 1.0 : -1.0;
        auto gen = [&](double scale) {
          if (side == 0 || scale != used_scale) u = gaussian(d, rng);
          used_scale = scale;
          std::vector<double> probe(d);
          for (std::size_t i = 0; i < d; ++i) probe[i] = cur[i] + dir * cfg.nes_sigma * scale * u[i];
          return clip_to_ball(x, probe, cfg.epsilon);
        };
        auto p = s.propose(gen, max_scale);
        const auto l = cross_entropy_loss(p.response.output, y);
        if (!l) continue;
        const double w = dir * *l / (cfg.nes_sigma * p.scale * 2.0 * pairs);
        for (std::size_t i = 0; i < d; ++i) g[i] += w * u[i];
      }
    }
    for (std::size_t i = 0; i < d; ++i) cur[i] += cfg.step_size * sign(g[i]);
    cur = to_doubles(clip_to_ball(x, cur, cfg.epsilon));
  }
}

using CandidateTransform = std::function<ImageTensor(const ImageTensor& candidate)>;

void run_square(AttackSession& s, const AttackConfig& cfg, std::mt19937_64& rng,
                const CandidateTransform& transform = {}) {
  const auto& x = s.clean();
  const auto& g = x.geometry();
  const auto y = s.label();
  const auto xd = to_doubles(x);
  const double eps = cfg.epsilon;
  auto margin_of = [y](const OracleResponse& r) { return margin_loss(r.output, y).value_or(kInf); };

  s.query(x);

  std::bernoulli_distribution coin(0.5);
  std::vector<double> init(xd.size());
  for (int c = 0; c < g.width; ++c) {
    for (int ch = 0; ch < g.channels; ++ch) {
      const double v = coin(rng) ? eps : -eps;
      for (int r = 0; r < g.height; ++r) {
        const std::size_t i = (static_cast<std::size_t>(r) * g.width + c) * g.channels + ch;
        init[i] = xd[i] + v;
      }
    }
  }
  ImageTensor best = clip_to_ball(x, init, eps);
  if (transform) best = transform(best);
  double best_margin = margin_of(s.query(best));

  const int min_side = std::min(g.height, g.width);
  for (std::size_t it = 0;; ++it) {
    const double p = square_p_selection(cfg.square_p_init, it, cfg.max_queries);
    const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(p * g.height * g.width))), 1,
                                std::max(1, min_side - 1));
    const auto bd = to_doubles(best);
    auto gen = [&](double scale) {
      const int sz = std::clamp(static_cast<int>(std::lround(side * scale)), 1, min_side);
      std::uniform_int_distribution<int> rpos(0, g.height - sz);
      std::uniform_int_distribution<int> cpos(0, g.width - sz);
      const int r0 = rpos(rng);
      const int c0 = cpos(rng);
      std::vector<double> cand = bd;
      for (int attempt = 0; attempt < 10; ++attempt) {
        double changed = 0.0;
        for (int ch = 0; ch < g.channels; ++ch) {
          const double v = coin(rng) ? eps : -eps;
          for (int r = r0; r < r0 + sz; ++r) {
            for (int c = c0; c < c0 + sz; ++c) {
              const std::size_t i = (static_cast<std::size_t>(r) * g.width + c) * g.channels + ch;
              cand[i] = std::clamp(xd[i] + v, 0.0, 1.0);
              changed += std::abs(cand[i] - bd[i]);
            }
          }
        }
        if (changed >= 1e-7) break;
      }
      auto img = clip_to_ball(x, cand, eps);
      return transform ? transform(img) : img;
    };
    const double max_scale = static_cast<double>(min_side) / side;
    auto prop = s.propose(gen, max_scale);
    const double m = margin_of(prop.response);
    if (m < best_margin) {
      best_margin = m;
      best = std::move(prop.image);
    }
  }
}

// Uniform noise until misclassified, then a blend toward the clean input.
std::optional<std::vector<double>> random_adversarial_init(AttackSession& s, const AttackConfig& cfg,
                                                           std::mt19937_64& rng) {
  const auto& g = s.clean().geometry();
  SessionView view{s, g};
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int k = 0; k < cfg.init_draws; ++k) {
    std::vector<double> u(g.size());
    for (auto& v : u) v = ud(rng);
    if (view.adversarial(u)) {
      s.set_ball_constrained(false);
      return u;
    }
  }
  s.mark_init_failed();
  return std::nullopt;
}

void run_boundary(AttackSession& s, const AttackConfig& cfg, std::mt19937_64& rng) {
  const auto& x = s.clean();
  const auto& g = x.geometry();
  const auto xd = to_doubles(x);
  SessionView view{s, g};
  s.query(x);
  auto init = random_adversarial_init(s, cfg, rng);
  if (!init) return;

  auto decide = [&](std::span<const double> v) { return view.adversarial(v); };
  auto adv = binary_search_boundary(decide, xd, *init, 1e-3).point;

  double sph = cfg.boundary_spherical_step;
  double src = cfg.boundary_source_step;
  // Success counts over the last 10 orthogonal and contraction trials.
  int sph_trials = 0, sph_hits = 0, src_trials = 0, src_hits = 0;
  auto adapt = [&cfg](int& trials, int& hits, double& a, double* b) {
    if (trials < 10) return;
    const double rate = hits / 10.0;
    const double f = rate > 0.5 ? cfg.boundary_step_adapt : rate < 0.2 ? 1.0 / cfg.boundary_step_adapt : 1.0;
    a *= f;
    if (b) *b *= f;
    trials = hits = 0;
  };
  for (;;) {
    const double dist = l2(xd, adv);
    auto orthogonal = [&](double scale) {
      std::vector<double> diff(xd.size());
      for (std::size_t i = 0; i < xd.size(); ++i) diff[i] = xd[i] - adv[i];
      auto eta = gaussian(xd.size(), rng);
      const double en = norm(eta);
      const double target = std::min(1.0, sph * scale) * dist;
      for (auto& e : eta) e *= target / en;
      const double proj = std::inner_product(eta.begin(), eta.end(), diff.begin(), 0.0) / (dist * dist);
      std::vector<double> cand(xd.size());
      for (std::size_t i = 0; i < xd.size(); ++i) cand[i] = adv[i] + eta[i] - proj * diff[i];
      const double cd = l2(xd, cand);
      for (std::size_t i = 0; i < xd.size(); ++i) cand[i] = xd[i] + (cand[i] - xd[i]) * (dist / cd);
      return as_image(g, clip01(std::move(cand)));
    };
    auto sp = s.propose(orthogonal, 1.0 / std::max(sph, 1e-12));
    const bool on_side = s.adversarial(sp.response);
    ++sph_trials;
    sph_hits += on_side;
    if (on_side) {
      const auto base = to_doubles(sp.image);
      auto contract = [&](double scale) {
        const double f = 1.0 - std::min(0.5, src * scale);
        std::vector<double> cand(xd.size());
        for (std::size_t i = 0; i < xd.size(); ++i) cand[i] = xd[i] + (base[i] - xd[i]) * f;
        return as_image(g, cand);
      };
      auto pr = s.propose(contract, 0.5 / std::max(src, 1e-12));
      const bool ok = s.adversarial(pr.response);
      ++src_trials;
      src_hits += ok;
      adv = ok ? to_doubles(pr.image) : base;
      adapt(src_trials, src_hits, src, nullptr);
    }
    adapt(sph_trials, sph_hits, sph, &src);
    sph = std::min(sph, 1.0);
    src = std::min(src, 0.5);
  }
}

void run_hsja(AttackSession& s, const AttackConfig& cfg, std::mt19937_64& rng) {
  const auto& x = s.clean();
  const auto& g = x.geometry();
  const auto xd = to_doubles(x);
  const double d = static_cast<double>(xd.size());
  SessionView view{s, g};
  s.query(x);
  auto init = random_adversarial_init(s, cfg, rng);
  if (!init) return;

  auto decide = [&](std::span<const double> v) { return view.adversarial(v); };
  const double theta = cfg.hsja_gamma / (d * std::sqrt(d));
  auto xb = binary_search_boundary(decide, xd, *init, theta).point;

  for (int t = 1;; ++t) {
    const double dist = l2(xd, xb);
    const double delta = std::sqrt(d) * theta * dist;
    const int evals = std::min(cfg.hsja_max_evals,
                               static_cast<int>(cfg.hsja_init_evals * std::sqrt(static_cast<double>(t))));

    // Probes go through propose so OARS can resample them.
    std::vector<double> grad(xd.size(), 0.0);
    std::vector<double> phis;
    std::vector<std::vector<double>> dirs;
    for (int b = 0; b < evals; ++b) {
      std::vector<double> u;
      auto gen = [&](double scale) {
        u = gaussian(xd.size(), rng);
        const double un = norm(u);
        for (auto& v : u) v /= un;
        std::vector<double> probe(xd.size());
        for (std::size_t i = 0; i < xd.size(); ++i) probe[i] = xb[i] + delta * scale * u[i];
        return as_image(g, clip01(std::move(probe)));
      };
      auto prop = s.propose(gen, 1e6);
      phis.push_back(s.adversarial(prop.response) ? 1.0 : -1.0);
      dirs.push_back(std::move(u));
    }
    const double mean = std::accumulate(phis.begin(), phis.end(), 0.0) / phis.size();
    const bool uniform = std::abs(mean) == 1.0;
    for (std::size_t b = 0; b < dirs.size(); ++b) {
      const double w = uniform ? phis[b] : phis[b] - mean;
      for (std::size_t i = 0; i < xd.size(); ++i) grad[i] += w * dirs[b][i];
    }
    const double gn = norm(grad);
    if (gn > 0) {
      for (auto& v : grad) v /= gn;
    }

    double xi = dist / std::sqrt(static_cast<double>(t));
    std::vector<double> cand;
    bool found = false;
    for (int h = 0; h < 30 && !found; ++h) {
      cand.resize(xd.size());
      for (std::size_t i = 0; i < xd.size(); ++i) cand[i] = std::clamp(xb[i] + xi * grad[i], 0.0, 1.0);
      found = decide(cand);
      xi /= 2.0;
    }
    if (!found) continue;
    xb = binary_search_boundary(decide, xd, cand, theta).point;
  }
}

void run_duplicate(AttackSession& s) {
  for (;;) s.query(s.clean());
}

void run_whitebox(AttackSession& s, const AttackConfig& cfg, std::mt19937_64& rng,
                  const ToyFeatureEncoder& encoder) {
  std::optional<ImageTensor> previous;
  // The session's last recorded query is the reference; track it here so
  // query recording can stay off.
  CandidateTransform transform = [&](const ImageTensor& cand) {
    if (!previous) {
      previous = cand;
      return cand;
    }
    auto r = pgd_lower_similarity(encoder, cand, *previous, s.clean(), cfg.epsilon,
                                  cfg.whitebox_pgd_steps, cfg.whitebox_pgd_step);
    auto img = as_image(s.clean().geometry(), r.image);
    previous = img;
    return img;
  };
  run_square(s, cfg, rng, transform);
}

}  // namespace

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::zoo:
      return "zoo";
    case AttackKind::nes:
      return "nes";
    case AttackKind::square:
      return "square";
    case AttackKind::boundary:
      return "boundary";
    case AttackKind::hsja:
      return "hsja";
    case AttackKind::duplicate:
      return "duplicate";
    case AttackKind::whitebox:
      return "whitebox";
  }
  return "?";
}

AttackKind attack_kind_from_string(std::string_view s) {
  for (auto k : {AttackKind::zoo, AttackKind::nes, AttackKind::square, AttackKind::boundary,
                 AttackKind::hsja, AttackKind::duplicate, AttackKind::whitebox}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown attack '" + std::string(s) + "'");
}

bool is_decision_based(AttackKind k) { return k == AttackKind::boundary || k == AttackKind::hsja; }

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || epsilon > 1.0) throw ConfigError("epsilon must lie in [0, 1]");
  if (max_queries < 1) throw ConfigError("max_queries must be at least 1");
  if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
  if (zoo_batch < 1 || !(zoo_h > 0.0)) throw ConfigError("zoo_batch and zoo_h must be positive");
  if (nes_population < 2 || nes_population % 2 != 0) {
    throw ConfigError("nes_population must be a positive even number");
  }
  if (!(nes_sigma > 0.0)) throw ConfigError("nes_sigma must be positive");
  if (!(square_p_init > 0.0 && square_p_init <= 1.0)) throw ConfigError("square_p_init must lie in (0, 1]");
  if (init_draws < 1) throw ConfigError("init_draws must be at least 1");
  if (!(boundary_spherical_step > 0.0 && boundary_source_step > 0.0 && boundary_step_adapt > 1.0)) {
    throw ConfigError("boundary step sizes must be positive and the adapt factor above 1");
  }
  if (hsja_init_evals < 1 || hsja_max_evals < hsja_init_evals || !(hsja_gamma > 0.0)) {
    throw ConfigError("invalid hsja evaluation settings");
  }
  if (oars.enabled && (!(oars.growth > 1.0) || oars.max_resamples < 0)) {
    throw ConfigError("oars growth must exceed 1 and max_resamples be non-negative");
  }
  if (whitebox_pgd_steps < 0 || !(whitebox_pgd_step > 0.0)) throw ConfigError("invalid pgd settings");
}

AttackTrace run_attack(const AttackConfig& cfg, const QueryOracle& oracle, const ImageTensor& x,
                       int y, const RunOptions& options) {
  cfg.validate();
  if (cfg.kind == AttackKind::whitebox) {
    require(options.encoder != nullptr, "whitebox attack needs a differentiable encoder");
  }
  AttackSession s(oracle, x, y, cfg.epsilon, cfg.max_queries, options.record_queries,
                  options.halt_on_flag);
  s.set_oars(cfg.oars);
  std::mt19937_64 rng(cfg.seed);
  try {
    switch (cfg.kind) {
      case AttackKind::zoo:
        run_zoo(s, cfg, rng);
        break;
      case AttackKind::nes:
        run_nes(s, cfg, rng);
        break;
      case AttackKind::square:
        run_square(s, cfg, rng);
        break;
      case AttackKind::boundary:
        run_boundary(s, cfg, rng);
        break;
      case AttackKind::hsja:
        run_hsja(s, cfg, rng);
        break;
      case AttackKind::duplicate:
        run_duplicate(s);
        break;
      case AttackKind::whitebox:
        run_whitebox(s, cfg, rng, *options.encoder);
        break;
    }
  } catch (const AttackSession::AttackStop&) {
  }
  auto trace = s.finish();
  trace.attack = std::string(to_string(cfg.kind));
  if (cfg.oars.enabled) trace.attack += "+oars";
  trace.seed = cfg.seed;
  return trace;
}

AttackConfig wrap_oars(AttackConfig inner, double growth, int max_resamples) {
  inner.oars = OarsSettings{true, growth, max_resamples};
  return inner;
}

std::optional<double> cross_entropy_loss(const ModelOutput& out, int y) {
  if (!out.has_probs() || y < 0 || static_cast<std::size_t>(y) >= out.probs.size()) return std::nullopt;
  return -std::log(std::max(out.probs[static_cast<std::size_t>(y)], 1e-300));
}

std::optional<double> margin_loss(const ModelOutput& out, int y) {
  if (!out.has_probs() || y < 0 || static_cast<std::size_t>(y) >= out.probs.size()) return std::nullopt;
  double other = -kInf;
  for (std::size_t c = 0; c < out.probs.size(); ++c) {
    if (static_cast<int>(c) != y) other = std::max(other, std::log(std::max(out.probs[c], 1e-300)));
  }
  return std::log(std::max(out.probs[static_cast<std::size_t>(y)], 1e-300)) - other;
}

double square_p_selection(double p_init, std::size_t iteration, std::size_t budget) {
  const double i = 10000.0 * static_cast<double>(iteration) / static_cast<double>(std::max<std::size_t>(budget, 1));
  if (i <= 10) return p_init;
  if (i <= 50) return p_init / 2;
  if (i <= 200) return p_init / 4;
  if (i <= 500) return p_init / 8;
  if (i <= 1000) return p_init / 16;
  if (i <= 2000) return p_init / 32;
  if (i <= 4000) return p_init / 64;
  if (i <= 6000) return p_init / 128;
  if (i <= 8000) return p_init / 256;
  return p_init / 512;
}

std::vector<double> nes_gradient_estimate(const VectorLoss& loss, std::span<const double> x,
                                          double sigma, int population, std::mt19937_64& rng) {
  require(population >= 2 && population % 2 == 0, "population must be a positive even number");
  const std::size_t d = x.size();
  std::vector<double> g(d, 0.0);
  std::vector<double> probe(d);
  for (int k = 0; k < population / 2; ++k) {
    const auto u = gaussian(d, rng);
    for (std::size_t i = 0; i < d; ++i) probe[i] = x[i] + sigma * u[i];
    const double lp = loss(probe);
    for (std::size_t i = 0; i < d; ++i) probe[i] = x[i] - sigma * u[i];
    const double lm = loss(probe);
    for (std::size_t i = 0; i < d; ++i) g[i] += (lp - lm) * u[i];
  }
  for (auto& v : g) v /= sigma * population;
  return g;
}

double zoo_coordinate_estimate(const VectorLoss& loss, std::span<const double> x, std::size_t i,
                               double h) {
  std::vector<double> probe(x.begin(), x.end());
  probe[i] = x[i] + h;
  const double lp = loss(probe);
  probe[i] = x[i] - h;
  const double lm = loss(probe);
  return (lp - lm) / (2.0 * h);
}

BoundarySearch binary_search_boundary(const VectorDecision& is_adversarial,
                                      std::span<const double> clean,
                                      std::span<const double> adversarial, double tolerance) {
  require(clean.size() == adversarial.size(), "binary_search_boundary: size mismatch");
  require(tolerance > 0.0, "binary_search_boundary: tolerance must be positive");
  BoundarySearch r;
  std::vector<double> mid(clean.size());
  while (r.high - r.low > tolerance) {
    const double a = 0.5 * (r.low + r.high);
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = (1.0 - a) * clean[i] + a * adversarial[i];
    ++r.queries;
    if (is_adversarial(mid)) {
      r.high = a;
    } else {
      r.low = a;
    }
  }
  r.point.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    r.point[i] = (1.0 - r.high) * clean[i] + r.high * adversarial[i];
  }
  return r;
}

std::vector<double> hsja_estimate_direction(const VectorDecision& is_adversarial,
                                            std::span<const double> boundary_point, double delta,
                                            int probes, std::mt19937_64& rng) {
  require(probes >= 1, "hsja_estimate_direction: need at least one probe");
  const std::size_t d = boundary_point.size();
  std::vector<std::vector<double>> dirs;
  std::vector<double> phis;
  std::vector<double> probe(d);
  for (int b = 0; b < probes; ++b) {
    auto u = gaussian(d, rng);
    const double un = norm(u);
    for (auto& v : u) v /= un;
    for (std::size_t i = 0; i < d; ++i) probe[i] = boundary_point[i] + delta * u[i];
    phis.push_back(is_adversarial(probe) ? 1.0 : -1.0);
    dirs.push_back(std::move(u));
  }
  const double mean = std::accumulate(phis.begin(), phis.end(), 0.0) / probes;
  const bool uniform = std::abs(mean) == 1.0;
  std::vector<double> g(d, 0.0);
  for (std::size_t b = 0; b < dirs.size(); ++b) {
    const double w = uniform ? phis[b] : phis[b] - mean;
    for (std::size_t i = 0; i < d; ++i) g[i] += w * dirs[b][i];
  }
  const double gn = norm(g);
  if (gn > 0) {
    for (auto& v : g) v /= gn;
  }
  return g;
}

PgdResult pgd_lower_similarity(const ToyFeatureEncoder& encoder, const ImageTensor& start,
                               const ImageTensor& reference, const ImageTensor& clean,
                               double epsilon, int steps, double step) {
  const auto ref = encoder.features(reference);
  PgdResult r;
  ImageTensor z = start;
  auto cg = encoder.cosine_and_gradient(z, ref);
  r.similarities.push_back(cg.cosine);
  for (int k = 0; k < steps; ++k) {
    double alpha = step;
    bool moved = false;
    for (int tries = 0; tries < 6 && !moved; ++tries) {
      auto zd = to_doubles(z);
      for (std::size_t i = 0; i < zd.size(); ++i) zd[i] -= alpha * sign(cg.gradient[i]);
      auto next = clip_to_ball(clean, zd, epsilon);
      auto ncg = encoder.cosine_and_gradient(next, ref);
      if (ncg.cosine < cg.cosine) {
        z = std::move(next);
        cg = std::move(ncg);
        r.similarities.push_back(cg.cosine);
        moved = true;
      } else {
        alpha /= 2.0;
      }
    }
    if (!moved) break;
  }
  r.image = to_doubles(z);
  return r;
}

}  // namespace advqdet
