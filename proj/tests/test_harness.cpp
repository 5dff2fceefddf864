#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "advqdet/config_io.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/harness.hpp"
#include "advqdet/trace_log.hpp"

using namespace advqdet;

namespace {

AttackTrace trace(const std::string& name, std::optional<std::size_t> first_flag, bool success = false,
                  std::size_t used = 10) {
  AttackTrace t;
  t.attack = name;
  t.first_flag_index = first_flag;
  t.success = success;
  t.queries_used = used;
  return t;
}

ExperimentConfig small_experiment(AttackKind kind, std::size_t instances, std::size_t budget) {
  ExperimentConfig c;
  c.name = "small";
  AttackPlan p;
  p.attack.kind = kind;
  p.attack.max_queries = budget;
  p.instances = instances;
  c.attacks.push_back(p);
  return c;
}

}  // namespace

TEST(Metrics, MeanDetectionCountOverDetectedOnly) {
  const auto r = compute_metrics({trace("a", 2), trace("a", 3), trace("a", 4), trace("a", std::nullopt)}, {});
  ASSERT_EQ(r.attacks.size(), 1u);
  const auto& m = r.attacks[0];
  EXPECT_DOUBLE_EQ(*m.mdc, 3.0);
  EXPECT_EQ(m.detected, 3u);
  EXPECT_EQ(m.undetected, 1u);
  EXPECT_DOUBLE_EQ(m.k_shot_dr.at(3), 0.5);
  EXPECT_DOUBLE_EQ(m.k_shot_dr.at(5), 0.75);
}

TEST(Metrics, KShotBoundaryIsInclusive) {
  const auto r = compute_metrics({trace("a", 2), trace("a", 3), trace("a", 6)}, {});
  EXPECT_DOUBLE_EQ(r.attacks[0].k_shot_dr.at(3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.attacks[0].k_shot_dr.at(5), 2.0 / 3.0);

  const auto four = compute_metrics({trace("a", 4)}, {});
  EXPECT_DOUBLE_EQ(four.attacks[0].k_shot_dr.at(3), 0.0);
  EXPECT_DOUBLE_EQ(four.attacks[0].k_shot_dr.at(5), 1.0);
}

TEST(Metrics, AsrAndQueryStats) {
  const auto r = compute_metrics({trace("a", std::nullopt, true, 4), trace("a", std::nullopt, false, 10),
                                  trace("b", 1, false, 1), trace("a", std::nullopt, true, 7)},
                                 {{"u", true, 1.0}, {"u", false, 0.0}, {"v", false, 0.0}, {"v", false, 0.0}});
  ASSERT_EQ(r.attacks.size(), 2u);
  EXPECT_EQ(r.attacks[0].attack, "a");
  EXPECT_DOUBLE_EQ(r.attacks[0].asr, 2.0 / 3.0);
  EXPECT_FALSE(r.attacks[0].mdc.has_value());
  EXPECT_DOUBLE_EQ(r.attacks[0].mean_queries, 7.0);
  EXPECT_DOUBLE_EQ(r.attacks[0].median_queries, 7.0);
  EXPECT_DOUBLE_EQ(*r.fpr, 0.25);
  EXPECT_EQ(r.benign_flagged, 1u);
}

TEST(Metrics, EmptyInputs) {
  const auto r = compute_metrics({}, {});
  EXPECT_TRUE(r.attacks.empty());
  EXPECT_FALSE(r.fpr.has_value());
  EXPECT_NE(format_table(r).find("benign: n=0"), std::string::npos);
}

TEST(Metrics, CsvHeader) {
  const auto csv = format_csv(compute_metrics({trace("square", 2)}, {{"u", false, 0.0}}));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "attack,attempts,ASR,3-shot DR,5-shot DR,mDC,detected,undetected,mean queries,FPR");
  std::getline(in, line);
  EXPECT_EQ(line, "square,1,0.0000,1.0000,1.0000,2.0000,1,0,10.00,");
  std::getline(in, line);
  EXPECT_EQ(line, "benign,1,,,,,0,1,,0.0000");
}

TEST(Benign, TrafficIsDeterministicAndDistinct) {
  SyntheticTask task{SyntheticTaskConfig{}};
  BenignConfig cfg{200, 7, 3};
  const auto a = generate_benign_traffic(task, cfg);
  const auto b = generate_benign_traffic(task, cfg);
  ASSERT_EQ(a.size(), 200u);
  std::set<Digest> digests;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].user_id, "benign-" + std::to_string(i % 7));
    EXPECT_EQ(a[i].seq, i / 7 + 1);
    digests.insert(content_digest(a[i].image));
  }
  EXPECT_EQ(digests.size(), a.size());
  EXPECT_TRUE(generate_benign_traffic(task, {0, 7, 3}).empty());
}

TEST(Experiment, DuplicateIsCaughtOnSecondQuery) {
  auto cfg = small_experiment(AttackKind::duplicate, 5, 100);
  cfg.detector = DetectorConfig::defaults(EncoderVariant::pixel_hash, cfg.task.geometry);
  cfg.fresh_detector_per_instance = true;
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.report.attacks.size(), 1u);
  EXPECT_DOUBLE_EQ(*r.report.attacks[0].mdc, 2.0);
  EXPECT_DOUBLE_EQ(r.report.attacks[0].asr, 0.0);
  for (const auto& t : r.traces) {
    EXPECT_TRUE(t.halted_on_detection);
    EXPECT_EQ(t.queries_used, 2u);
  }
}

TEST(Experiment, PassThroughMatchesUndefended) {
  auto cfg = small_experiment(AttackKind::square, 4, 300);
  const auto bare = run_experiment(cfg);
  cfg.detector = DetectorConfig::defaults(EncoderVariant::toy_dense, cfg.task.geometry);
  cfg.detector->action = DefenseAction::pass_through;
  const auto passed = run_experiment(cfg);
  EXPECT_DOUBLE_EQ(bare.report.attacks[0].asr, passed.report.attacks[0].asr);
  ASSERT_EQ(bare.traces.size(), passed.traces.size());
  for (std::size_t i = 0; i < bare.traces.size(); ++i) {
    EXPECT_EQ(bare.traces[i].queries_used, passed.traces[i].queries_used);
    EXPECT_EQ(bare.traces[i].success, passed.traces[i].success);
    EXPECT_FALSE(bare.traces[i].first_flag_index.has_value());
  }
}

TEST(Experiment, FprMatchesPairwiseScan) {
  ExperimentConfig cfg;
  cfg.benign = {150, 5, 11};
  cfg.detector = DetectorConfig::defaults(EncoderVariant::perceptual_hash, cfg.task.geometry);
  cfg.detector->threshold = 0.8;
  const auto r = run_experiment(cfg);

  SyntheticTask task(cfg.task);
  const auto queries = generate_benign_traffic(task, cfg.benign);
  const auto enc = make_encoder(cfg.detector->encoder);
  std::vector<Fingerprint> seen;
  std::size_t flagged = 0;
  ASSERT_EQ(r.benign.size(), queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto fp = enc->encode(queries[i].image);
    double best = -1.0;
    for (const auto& s : seen) best = std::max(best, similarity(fp, s));
    const bool hit = !seen.empty() && best > cfg.detector->threshold;
    EXPECT_EQ(r.benign[i].flagged, hit) << i;
    flagged += hit;
    seen.push_back(fp);
  }
  EXPECT_DOUBLE_EQ(*r.report.fpr, static_cast<double>(flagged) / queries.size());
}

TEST(Experiment, UsersSplitRoundRobin) {
  auto cfg = small_experiment(AttackKind::duplicate, 1, 6);
  cfg.attacks[0].users = 3;
  cfg.detector = DetectorConfig::defaults(EncoderVariant::toy_dense, cfg.task.geometry);
  cfg.detector->bank.scope = BankScope::per_user;
  const auto r = run_experiment(cfg);
  // Each user sees the duplicate for the first time on queries 1..3.
  EXPECT_EQ(r.traces[0].first_flag_index, std::optional<std::size_t>(4));
}

TEST(Experiment, ValidationRejectsEmptyRuns) {
  ExperimentConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_experiment(AttackKind::square, 1, 10);
  cfg.attacks[0].users = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TraceLog, RoundTripReproducesReport) {
  auto cfg = small_experiment(AttackKind::nes, 3, 120);
  cfg.attacks.push_back(small_experiment(AttackKind::duplicate, 2, 5).attacks[0]);
  cfg.detector = DetectorConfig::defaults(EncoderVariant::toy_dense, cfg.task.geometry);
  cfg.benign = {30, 3, 2};
  const auto live = run_experiment(cfg);

  std::stringstream buf;
  write_trace_log(buf, live.traces, live.benign);
  const auto back = read_trace_log(buf);
  ASSERT_EQ(back.traces.size(), live.traces.size());
  for (std::size_t i = 0; i < live.traces.size(); ++i) {
    const auto& a = live.traces[i];
    const auto& b = back.traces[i];
    EXPECT_EQ(a.attack, b.attack);
    EXPECT_EQ(a.success, b.success);
    EXPECT_EQ(a.queries_used, b.queries_used);
    EXPECT_EQ(a.first_flag_index, b.first_flag_index);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t k = 0; k < a.log.size(); ++k) {
      EXPECT_EQ(a.log[k].seq, b.log[k].seq);
      EXPECT_EQ(a.log[k].flagged, b.log[k].flagged);
      EXPECT_DOUBLE_EQ(a.log[k].score, b.log[k].score);
      EXPECT_EQ(a.log[k].action, b.log[k].action);
      EXPECT_EQ(a.log[k].served_label, b.log[k].served_label);
    }
  }
  EXPECT_EQ(format_csv(compute_metrics(back.traces, back.benign)), format_csv(live.report));
  EXPECT_EQ(format_table(compute_metrics(back.traces, back.benign)), format_table(live.report));
}

TEST(TraceLog, MalformedLineThrows) {
  std::stringstream buf("{\"type\":\"query\",\"seq\":1}\n");
  EXPECT_THROW(read_trace_log(buf), FormatError);
}

TEST(SimilarityCurve, TakesLeadingScores) {
  AttackTrace t;
  for (int i = 0; i < 5; ++i) t.log.push_back({static_cast<std::uint64_t>(i + 1), false, 0.1 * i, "", 0, 0});
  EXPECT_EQ(similarity_curve(t, 3), (std::vector<double>{0.0, 0.1, 0.2}));
  EXPECT_EQ(similarity_curve(t).size(), 5u);
}
