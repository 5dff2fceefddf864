#include <gtest/gtest.h>

#include "advqdet/config_io.hpp"
#include "advqdet/errors.hpp"

using namespace advqdet;

TEST(ExperimentConfig, DumpParseRoundTrip) {
  ExperimentConfig c;
  c.name = "rt";
  c.task.geometry = {32, 24, 1};
  c.task.seed = 5;
  c.detector = DetectorConfig::defaults(EncoderVariant::perceptual_hash, c.task.geometry);
  c.detector->bank.capacity = 1000;
  c.detector->bank.eviction = Eviction::fifo;
  c.detector->action = DefenseAction::rate_limit;
  AttackPlan p;
  p.attack.kind = AttackKind::hsja;
  p.attack.max_queries = 777;
  p.attack.oars.enabled = true;
  p.attack.oars.growth = 2.0;
  p.instances = 3;
  p.users = 4;
  c.attacks.push_back(p);
  c.benign = {12, 3, 9};
  c.seed = 42;
  c.halt_on_detection = false;
  c.fresh_detector_per_instance = true;
  c.interleave = Interleave::sequential;
  c.csv = "out.csv";

  const auto text = dump_experiment_config(c);
  const auto back = parse_experiment_config(text);
  EXPECT_EQ(dump_experiment_config(back), text);
  EXPECT_EQ(back.task.geometry.width, 24);
  EXPECT_EQ(back.detector->bank.capacity, std::optional<std::size_t>(1000));
  EXPECT_EQ(back.attacks[0].attack.kind, AttackKind::hsja);
  EXPECT_TRUE(back.attacks[0].attack.oars.enabled);
  EXPECT_EQ(back.halt_on_detection, std::optional<bool>(false));
}

TEST(ExperimentConfig, MissingKeysTakeDefaults) {
  const auto c = parse_experiment_config(R"({"attacks":[{"attack":{"kind":"nes"},"instances":2}],
                                            "detector":{"encoder":{"variant":"pixel-hash"}}})");
  EXPECT_EQ(c.name, "experiment");
  EXPECT_EQ(c.attacks[0].attack.kind, AttackKind::nes);
  EXPECT_EQ(c.attacks[0].users, 1u);
  EXPECT_DOUBLE_EQ(c.attacks[0].attack.epsilon, 0.05);
  ASSERT_TRUE(c.detector);
  EXPECT_DOUBLE_EQ(c.detector->threshold, 0.49);
  EXPECT_EQ(c.detector->encoder.window_size, 20);
  EXPECT_TRUE(c.halts());
}

TEST(ExperimentConfig, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_experiment_config(R"({"atacks":[]})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"benign":{"count":1,"user":2}})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"attacks":[{"attack":{"kind":"square","eps":0.1}}]})"),
               ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"benign":{"count":1},"detector":{"bank":{"size":3}}})"),
               ConfigError);
}

TEST(ExperimentConfig, BadValuesAreConfigErrors) {
  EXPECT_THROW(parse_experiment_config("{not json"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"benign":{"count":"many"}})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"attacks":[{"attack":{"kind":"qeba"}}]})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"benign":{"count":1},"interleave":"random"})"), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"benign":{"count":1},"detector":{"threshold":1.5}})"),
               ConfigError);
}

TEST(DetectorConfig, ParseStartsFromVariantDefaults) {
  const Geometry g{100, 100, 3};
  const auto d = parse_detector_config(R"({"encoder":{"variant":"toy-dense"},"action":"reject"})", g);
  EXPECT_DOUBLE_EQ(d.threshold, 0.90);
  EXPECT_EQ(d.action, DefenseAction::reject);
  EXPECT_THROW(parse_detector_config(R"({"mode":"sd-knn"})", g), ConfigError);
  const auto sd = parse_detector_config(R"({"mode":"sd-knn","encoder":{"variant":"toy-dense"}})", g);
  EXPECT_EQ(sd.bank.scope, BankScope::per_user);
  EXPECT_EQ(sd.knn_k, 50u);
  EXPECT_EQ(parse_detector_config(dump_detector_config(d), g).action, DefenseAction::reject);
  EXPECT_EQ(dump_detector_config(parse_detector_config(dump_detector_config(sd), g)),
            dump_detector_config(sd));
}

TEST(AttackConfig, OarsShorthand) {
  const auto a = parse_attack_config(R"({"kind":"square","oars":true})");
  EXPECT_TRUE(a.oars.enabled);
  EXPECT_DOUBLE_EQ(a.oars.growth, 1.5);
  EXPECT_EQ(a.oars.max_resamples, 10);
  const auto b = parse_attack_config(R"({"oars":{"growth":3}})");
  EXPECT_TRUE(b.oars.enabled);
  EXPECT_DOUBLE_EQ(b.oars.growth, 3.0);
  EXPECT_THROW(parse_attack_config(R"({"oars":{"grow":3}})"), ConfigError);
}

TEST(TradeoffConfig, RoundTripAndValidation) {
  const auto t = parse_tradeoff_config(R"({"dim":16,"beta":0.2,"thresholds":[0.1,0.5]})");
  EXPECT_EQ(t.dim, 16u);
  EXPECT_EQ(t.grid(), (std::vector<double>{0.1, 0.5}));
  const auto back = parse_tradeoff_config(dump_tradeoff_config(t));
  EXPECT_EQ(dump_tradeoff_config(back), dump_tradeoff_config(t));
  EXPECT_THROW(parse_tradeoff_config(R"({"samples":10})"), ConfigError);
  EXPECT_THROW(parse_tradeoff_config(R"({"dims":10})"), ConfigError);
}
