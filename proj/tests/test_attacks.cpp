#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "advqdet/attacks.hpp"
#include "advqdet/detector.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/synthetic.hpp"
#include "test_util.hpp"

using namespace advqdet;

namespace {

struct Fixture {
  SyntheticTask task{SyntheticTaskConfig{}};
  TargetModel victim = task.victim();
  LabeledImage sample;

  explicit Fixture(std::uint64_t seed = 0) : sample(draw(seed)) {}

  LabeledImage draw(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    return task.sample_correct(victim, rng);
  }

  // Undefended oracle that counts calls.
  QueryOracle oracle(std::size_t* calls = nullptr, bool labels_only = false) const {
    return [this, calls, labels_only](const ImageTensor& q) {
      if (calls) ++*calls;
      OracleResponse r;
      r.output = victim.predict(q);
      if (labels_only) r.output.probs.clear();
      return r;
    };
  }
};

// Oracle fronted by a detector.
QueryOracle defended(Detector& det, const TargetModel& victim, std::size_t* calls = nullptr) {
  return [&det, &victim, calls](const ImageTensor& q) {
    if (calls) ++*calls;
    const auto v = det.detect_and_serve(QueryRecord{"a", 0, q, 0}, victim);
    OracleResponse r;
    r.output = v.served_output;
    r.refused = v.refused;
    r.from_cache = v.from_cache;
    r.flagged = v.flagged;
    r.score = v.score;
    r.action = std::string(to_string(v.action_taken));
    return r;
  };
}

AttackConfig config(AttackKind k, std::size_t budget, std::uint64_t seed = 0) {
  AttackConfig c;
  c.kind = k;
  c.max_queries = budget;
  c.seed = seed;
  return c;
}

const AttackKind kAll[] = {AttackKind::zoo,  AttackKind::nes,       AttackKind::square,
                           AttackKind::boundary, AttackKind::hsja, AttackKind::duplicate,
                           AttackKind::whitebox};

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  return dot / (na * nb);
}

}  // namespace

TEST(Zoo, CoordinateEstimateMatchesAnalyticPartial) {
  Fixture f;
  const auto& x = f.sample.image;
  const int y = f.sample.label;
  const auto analytic = f.victim.loss_and_grad(x, y).gradient;
  VectorLoss loss = [&](std::span<const double> v) {
    std::vector<float> p(v.begin(), v.end());
    return f.victim.loss_and_grad(ImageTensor::clamped(x.geometry(), p), y).loss;
  };
  const auto xd = to_doubles(x);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t i = rng() % xd.size();
    if (xd[i] < 1e-3 || xd[i] > 1 - 1e-3) continue;
    EXPECT_NEAR(zoo_coordinate_estimate(loss, xd, i, 1e-4), analytic[i], 1e-3);
  }
}

TEST(Attacks, ZeroEpsilonNeverSucceeds) {
  Fixture f;
  for (auto k : {AttackKind::zoo, AttackKind::nes, AttackKind::square}) {
    auto cfg = config(k, 400);
    cfg.epsilon = 0.0;
    const auto t = run_attack(cfg, f.oracle(), f.sample.image, f.sample.label, {true});
    EXPECT_FALSE(t.success);
    EXPECT_FALSE(t.adversarial);
    for (const auto& q : t.queries) EXPECT_EQ(q, f.sample.image);
  }
}

TEST(Attacks, QueryAccountingIsExact) {
  Fixture f(1);
  const ToyFeatureEncoder enc;
  for (auto k : kAll) {
    for (std::size_t budget : {1, 7, 333}) {
      std::size_t calls = 0;
      RunOptions opts{true, false, &enc};
      const auto t = run_attack(config(k, budget), f.oracle(&calls), f.sample.image, f.sample.label, opts);
      EXPECT_EQ(t.queries_used, calls) << to_string(k);
      EXPECT_EQ(t.log.size(), calls);
      EXPECT_EQ(t.queries.size(), calls);
      EXPECT_EQ(t.outputs.size(), calls);
      EXPECT_LE(calls, budget);
      if (!t.success) EXPECT_EQ(calls, budget) << to_string(k);
      for (std::size_t i = 0; i < t.log.size(); ++i) EXPECT_EQ(t.log[i].seq, i + 1);
    }
  }
}

TEST(Attacks, FirstQueryIsClean) {
  Fixture f(2);
  const ToyFeatureEncoder enc;
  for (auto k : kAll) {
    const auto t = run_attack(config(k, 20), f.oracle(), f.sample.image, f.sample.label, {true, false, &enc});
    ASSERT_FALSE(t.queries.empty());
    EXPECT_EQ(t.queries[0], f.sample.image) << to_string(k);
  }
}

TEST(Attacks, FixedSeedGivesIdenticalTraces) {
  Fixture f(3);
  const ToyFeatureEncoder enc;
  for (auto k : kAll) {
    const auto a = run_attack(config(k, 500, 9), f.oracle(), f.sample.image, f.sample.label, {true, false, &enc});
    const auto b = run_attack(config(k, 500, 9), f.oracle(), f.sample.image, f.sample.label, {true, false, &enc});
    EXPECT_EQ(a.queries, b.queries) << to_string(k);
    EXPECT_EQ(a.success, b.success);
  }
}

TEST(Attacks, ScoreBasedQueriesStayInBall) {
  Fixture f(4);
  const ToyFeatureEncoder enc;
  for (auto k : {AttackKind::zoo, AttackKind::nes, AttackKind::square, AttackKind::whitebox}) {
    const auto t = run_attack(config(k, 1500), f.oracle(), f.sample.image, f.sample.label, {true, false, &enc});
    for (const auto& rec : t.log) EXPECT_LE(rec.linf, 0.05 + 1e-6) << to_string(k);
    EXPECT_TRUE(t.ball_constrained);
  }
}

TEST(Attacks, SuccessMeansMisclassifiedInsideBall) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Fixture f(seed);
    const auto t = run_attack(config(AttackKind::square, 10000, seed), f.oracle(), f.sample.image,
                              f.sample.label);
    if (!t.success) continue;
    EXPECT_NE(f.victim.predict_label(*t.adversarial), f.sample.label);
    EXPECT_LE(linf_distance(*t.adversarial, f.sample.image), 0.05 + 1e-6);
    EXPECT_EQ(t.log.back().served_label, f.victim.predict_label(*t.adversarial));
  }
}

TEST(Nes, QuadraticGradientCorrelates) {
  std::mt19937_64 rng(5);
  const std::size_t d = 10;
  std::vector<double> a(d), x(d);
  for (std::size_t i = 0; i < d; ++i) {
    a[i] = 0.5 + static_cast<double>(i) / d;
    x[i] = std::normal_distribution<double>()(rng);
  }
  std::size_t calls = 0;
  VectorLoss loss = [&](std::span<const double> v) {
    ++calls;
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * v[i] * v[i];
    return s;
  };
  std::vector<double> truth(d);
  for (std::size_t i = 0; i < d; ++i) truth[i] = 2 * a[i] * x[i];
  int good = 0;
  for (int t = 0; t < 20; ++t) {
    calls = 0;
    const auto g = nes_gradient_estimate(loss, x, 1e-3, 50, rng);
    EXPECT_EQ(calls, 50u);
    good += cosine(g, truth) > 0.5;
  }
  EXPECT_GE(good, 18);
}

TEST(Nes, PopulationMustBeEven) {
  std::mt19937_64 rng(6);
  VectorLoss loss = [](std::span<const double>) { return 0.0; };
  std::vector<double> x(3, 0.0);
  EXPECT_THROW(nes_gradient_estimate(loss, x, 1e-3, 3, rng), ContractViolation);
  auto cfg = config(AttackKind::nes, 10);
  cfg.nes_population = 7;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Square, ScheduleHalvesOverTheBudget) {
  EXPECT_DOUBLE_EQ(square_p_selection(0.8, 0, 10000), 0.8);
  EXPECT_DOUBLE_EQ(square_p_selection(0.8, 10, 10000), 0.8);
  EXPECT_DOUBLE_EQ(square_p_selection(0.8, 11, 10000), 0.4);
  EXPECT_DOUBLE_EQ(square_p_selection(0.8, 1000, 10000), 0.05);
  EXPECT_DOUBLE_EQ(square_p_selection(0.8, 9000, 10000), 0.8 / 512);
  // Rescaled: iteration 100 of 1000 sits where 1000 of 10000 does.
  EXPECT_DOUBLE_EQ(square_p_selection(0.8, 100, 1000), 0.05);
  double prev = 1.0;
  for (std::size_t i = 0; i < 10000; i += 13) {
    const double p = square_p_selection(0.8, i, 10000);
    EXPECT_LE(p, prev);
    prev = p;
  }
}

TEST(Square, AcceptedMarginsNeverIncrease) {
  Fixture f(7);
  const auto t = run_attack(config(AttackKind::square, 800), f.oracle(), f.sample.image,
                            f.sample.label, {true});
  // Replay the acceptance rule over the recorded stream.
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> accepted;
  for (std::size_t i = 1; i < t.outputs.size(); ++i) {
    const double m = *margin_loss(t.outputs[i], f.sample.label);
    if (i == 1 || m < best) {
      best = m;
      accepted.push_back(m);
    }
  }
  for (std::size_t i = 1; i < accepted.size(); ++i) EXPECT_LT(accepted[i], accepted[i - 1]);
  EXPECT_GT(accepted.size(), 3u);
}

TEST(Losses, MarginAndCrossEntropy) {
  const ModelOutput o{{0.1, 0.7, 0.2}, 1};
  EXPECT_NEAR(*cross_entropy_loss(o, 1), -std::log(0.7), 1e-12);
  EXPECT_NEAR(*margin_loss(o, 1), std::log(0.7) - std::log(0.2), 1e-12);
  EXPECT_LT(*margin_loss(o, 0), 0.0);
  EXPECT_FALSE(cross_entropy_loss(refusal_output(), 0));
  EXPECT_FALSE(margin_loss(ModelOutput{{}, 2}, 2));
}

TEST(Boundary, SecondQueryIsRandomInitOutsideBall) {
  Fixture f(8);
  const auto t = run_attack(config(AttackKind::boundary, 50), f.oracle(nullptr, true),
                            f.sample.image, f.sample.label, {true});
  ASSERT_GE(t.queries.size(), 2u);
  EXPECT_EQ(t.queries[0], f.sample.image);
  EXPECT_GT(linf_distance(t.queries[1], f.sample.image), 0.5);
  EXPECT_FALSE(t.ball_constrained);
}

TEST(Boundary, InitFailureIsReported) {
  // A victim that always answers the true label can never be fooled.
  Fixture f(9);
  QueryOracle stubborn = [&](const ImageTensor&) {
    OracleResponse r;
    r.output = ModelOutput{{}, f.sample.label};
    return r;
  };
  auto cfg = config(AttackKind::boundary, 5000);
  cfg.init_draws = 20;
  const auto t = run_attack(cfg, stubborn, f.sample.image, f.sample.label);
  EXPECT_TRUE(t.init_failed);
  EXPECT_EQ(t.queries_used, 21u);
  EXPECT_FALSE(t.success);
}

TEST(Boundary, AdversarialDistanceShrinks) {
  Fixture f(10);
  const auto t = run_attack(config(AttackKind::boundary, 3000), f.oracle(nullptr, true),
                            f.sample.image, f.sample.label, {true});
  // Track the best adversarial L2 distance among issued queries after the init.
  double first = -1, last = -1;
  for (std::size_t i = 1; i < t.queries.size(); ++i) {
    if (t.outputs[i].label == f.sample.label) continue;
    const double d = l2_distance(t.queries[i], f.sample.image);
    if (first < 0) first = d;
    last = last < 0 ? d : std::min(last, d);
  }
  ASSERT_GT(first, 0);
  EXPECT_LT(last, first * 0.5);
}

TEST(Hsja, BisectionMeetsTolerance) {
  const std::vector<double> clean{0.0, 0.0};
  const std::vector<double> adv{1.0, 1.0};
  std::size_t calls = 0;
  VectorDecision decide = [&](std::span<const double> v) {
    ++calls;
    return v[0] > 0.3141;
  };
  for (double tol : {0.1, 1e-3, 1e-6}) {
    calls = 0;
    const auto r = binary_search_boundary(decide, clean, adv, tol);
    EXPECT_LE(r.high - r.low, tol);
    EXPECT_LE(r.low, 0.3141);
    EXPECT_GE(r.high, 0.3141);
    EXPECT_TRUE(decide(r.point));
    EXPECT_EQ(r.queries, calls - 1);
    EXPECT_EQ(r.queries, static_cast<std::size_t>(std::ceil(std::log2(1.0 / tol))));
  }
}

TEST(Hsja, NormalEstimateOnLinearVictim) {
  std::mt19937_64 rng(11);
  const std::size_t d = 10;
  std::vector<double> w(d);
  for (auto& v : w) v = std::normal_distribution<double>()(rng);
  VectorDecision decide = [&](std::span<const double> v) {
    return std::inner_product(w.begin(), w.end(), v.begin(), 0.0) > 0.0;
  };
  std::vector<double> point(d, 0.0);
  int good = 0;
  for (int t = 0; t < 20; ++t) {
    const auto g = hsja_estimate_direction(decide, point, 1e-3, 100, rng);
    good += cosine(g, w) > 0.7;
  }
  EXPECT_GE(good, 19);
}

TEST(Hsja, ProbesAreCounted) {
  Fixture f(12);
  std::size_t calls = 0;
  const auto t = run_attack(config(AttackKind::hsja, 700), f.oracle(&calls, true), f.sample.image,
                            f.sample.label);
  EXPECT_EQ(t.queries_used, calls);
}

TEST(Duplicate, ResendsTheCleanImage) {
  Fixture f(13);
  const auto t = run_attack(config(AttackKind::duplicate, 5), f.oracle(), f.sample.image,
                            f.sample.label, {true});
  ASSERT_EQ(t.queries.size(), 5u);
  for (const auto& q : t.queries) EXPECT_EQ(q, f.sample.image);
}

TEST(Session, HaltOnFlagStopsAtFirstDetection) {
  Fixture f(14);
  Detector det(DetectorConfig::defaults(EncoderVariant::pixel_hash, f.sample.image.geometry()));
  const auto t = run_attack(config(AttackKind::duplicate, 50), defended(det, f.victim),
                            f.sample.image, f.sample.label, {false, true});
  EXPECT_TRUE(t.halted_on_detection);
  EXPECT_EQ(t.first_flag_index, std::optional<std::size_t>(2));
  EXPECT_EQ(t.queries_used, 2u);
}

TEST(Session, ClipToBallProjects) {
  const ImageTensor x({1, 3, 1}, {0.0f, 0.5f, 0.98f});
  const std::vector<double> cand{-0.3, 0.9, 0.99};
  const auto c = clip_to_ball(x, cand, 0.05);
  EXPECT_FLOAT_EQ(c.data()[0], 0.0f);
  EXPECT_FLOAT_EQ(c.data()[1], 0.55f);
  EXPECT_FLOAT_EQ(c.data()[2], 0.99f);
}

TEST(Oars, NoFeedbackMeansIdenticalTrace) {
  Fixture f(15);
  const ToyFeatureEncoder enc;
  for (auto k : kAll) {
    const auto inner = config(k, 600, 3);
    const auto a = run_attack(inner, f.oracle(), f.sample.image, f.sample.label, {true, false, &enc});
    const auto b = run_attack(wrap_oars(inner), f.oracle(), f.sample.image, f.sample.label, {true, false, &enc});
    EXPECT_EQ(a.queries, b.queries) << to_string(k);
    EXPECT_EQ(a.success, b.success);
    EXPECT_EQ(b.attack, std::string(to_string(k)) + "+oars");
  }
}

TEST(Oars, ScaledProposalsStayInBall) {
  Fixture f(16);
  for (auto k : {AttackKind::zoo, AttackKind::nes, AttackKind::square}) {
    auto cfg = DetectorConfig::defaults(EncoderVariant::pixel_hash, f.sample.image.geometry());
    cfg.action = DefenseAction::reject;
    Detector det(cfg);
    const auto t = run_attack(wrap_oars(config(k, 400)), defended(det, f.victim), f.sample.image,
                              f.sample.label);
    for (const auto& rec : t.log) EXPECT_LE(rec.linf, 0.05 + 1e-6) << to_string(k);
    EXPECT_TRUE(t.first_flag_index.has_value());
  }
}

TEST(Oars, ResamplesOnDetectionSignal) {
  Fixture f(17);
  std::size_t n = 0;
  // Refuses every third query so the wrapper has something to react to.
  QueryOracle flaky = [&](const ImageTensor& q) {
    OracleResponse r;
    if (++n % 3 == 0) {
      r.output = refusal_output();
      r.refused = r.flagged = true;
    } else {
      r.output = f.victim.predict(q);
    }
    return r;
  };
  AttackSession s(flaky, f.sample.image, f.sample.label, 0.05, 100);
  s.set_oars({true, 1.5, 10});
  std::vector<double> scales;
  for (int i = 0; i < 6; ++i) {
    auto p = s.propose([&](double scale) { scales.push_back(scale); return f.sample.image; }, 4.0);
    EXPECT_FALSE(AttackSession::detection_signal(p.response));
  }
  // Queries 3 and 6 were refused and regenerated at 1.5x.
  EXPECT_EQ(scales, (std::vector<double>{1, 1, 1, 1.5, 1, 1, 1.5, 1}));
  EXPECT_EQ(s.used(), 8u);
}

TEST(Whitebox, PgdStrictlyLowersSimilarity) {
  Fixture f(18);
  const ToyFeatureEncoder enc;
  std::mt19937_64 rng(19);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> cand = to_doubles(f.sample.image);
    for (auto& v : cand) v += (rng() % 2 ? 0.05 : -0.05);
    const auto start = clip_to_ball(f.sample.image, cand, 0.05);
    const auto r = pgd_lower_similarity(enc, start, f.sample.image, f.sample.image, 0.05, 10, 0.01);
    ASSERT_GE(r.similarities.size(), 1u);
    EXPECT_LE(r.similarities.size(), 11u);
    for (std::size_t i = 1; i < r.similarities.size(); ++i) {
      EXPECT_LT(r.similarities[i], r.similarities[i - 1]);
    }
    for (std::size_t i = 0; i < r.image.size(); ++i) {
      EXPECT_LE(std::abs(r.image[i] - f.sample.image.data()[i]), 0.05 + 1e-6);
    }
  }
}

TEST(Whitebox, RequiresEncoder) {
  Fixture f(19);
  EXPECT_THROW(run_attack(config(AttackKind::whitebox, 10), f.oracle(), f.sample.image, f.sample.label),
               ContractViolation);
}

TEST(Attacks, NamesRoundTrip) {
  for (auto k : kAll) EXPECT_EQ(attack_kind_from_string(to_string(k)), k);
  EXPECT_THROW(attack_kind_from_string("qeba"), ConfigError);
  EXPECT_TRUE(is_decision_based(AttackKind::hsja));
  EXPECT_FALSE(is_decision_based(AttackKind::square));
}
