#include "advqdet/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "advqdet/errors.hpp"
#include "json.hpp"

namespace advqdet {

namespace {

using nlohmann::json;

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto allowed : keys) ok = ok || k == allowed;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("key '") + key + "': " + e.what());
    }
  }
}

Precision precision_from_string(const std::string& s) {
  if (s == "single") return Precision::single;
  if (s == "half") return Precision::half;
  throw ConfigError("unknown precision '" + s + "'");
}

std::string precision_name(Precision p) { return p == Precision::single ? "single" : "half"; }

Geometry parse_geometry(const json& j) {
  only_keys(j, "geometry", {"height", "width", "channels"});
  Geometry g;
  read(j, "height", g.height);
  read(j, "width", g.width);
  read(j, "channels", g.channels);
  return g;
}

SyntheticTaskConfig parse_task(const json& j) {
  only_keys(j, "task", {"geometry", "num_classes", "pattern_block", "pattern_amplitude",
                        "field_cell", "field_sigma", "pixel_noise", "logit_scale", "seed"});
  SyntheticTaskConfig t;
  if (j.contains("geometry")) t.geometry = parse_geometry(j["geometry"]);
  read(j, "num_classes", t.num_classes);
  read(j, "pattern_block", t.pattern_block);
  read(j, "pattern_amplitude", t.pattern_amplitude);
  read(j, "field_cell", t.field_cell);
  read(j, "field_sigma", t.field_sigma);
  read(j, "pixel_noise", t.pixel_noise);
  read(j, "logit_scale", t.logit_scale);
  read(j, "seed", t.seed);
  return t;
}

json dump_task(const SyntheticTaskConfig& t) {
  return {{"geometry", {{"height", t.geometry.height}, {"width", t.geometry.width}, {"channels", t.geometry.channels}}},
          {"num_classes", t.num_classes},
          {"pattern_block", t.pattern_block},
          {"pattern_amplitude", t.pattern_amplitude},
          {"field_cell", t.field_cell},
          {"field_sigma", t.field_sigma},
          {"pixel_noise", t.pixel_noise},
          {"logit_scale", t.logit_scale},
          {"seed", t.seed}};
}

void apply_encoder(const json& j, EncoderConfig& e) {
  only_keys(j, "encoder", {"variant", "quantization_step", "window_size", "window_stride",
                           "signature_budget", "block_size", "external_source", "external_dim",
                           "toy_pool", "toy_gain", "precision"});
  read(j, "quantization_step", e.quantization_step);
  read(j, "window_size", e.window_size);
  read(j, "window_stride", e.window_stride);
  read(j, "signature_budget", e.signature_budget);
  read(j, "block_size", e.block_size);
  read(j, "external_source", e.external_source);
  read(j, "external_dim", e.external_dim);
  read(j, "toy_pool", e.toy_pool);
  read(j, "toy_gain", e.toy_gain);
  if (j.contains("precision")) e.precision = precision_from_string(j["precision"].get<std::string>());
}

json dump_encoder(const EncoderConfig& e) {
  return {{"variant", std::string(to_string(e.variant))},
          {"quantization_step", e.quantization_step},
          {"window_size", e.window_size},
          {"window_stride", e.window_stride},
          {"signature_budget", e.signature_budget},
          {"block_size", e.block_size},
          {"external_source", e.external_source},
          {"external_dim", e.external_dim},
          {"toy_pool", e.toy_pool},
          {"toy_gain", e.toy_gain},
          {"precision", precision_name(e.precision)}};
}

DetectorConfig parse_detector(const json& j, const Geometry& geometry) {
  only_keys(j, "detector", {"encoder", "bank", "threshold", "mode", "knn_k", "knn_distance",
                            "action", "append_flagged", "rate_limit_flags", "rate_limit_window_ms"});
  EncoderVariant variant = EncoderVariant::pixel_hash;
  if (j.contains("encoder") && j["encoder"].contains("variant")) {
    variant = encoder_variant_from_string(j["encoder"]["variant"].get<std::string>());
  }
  DetectionMode mode = DetectionMode::threshold;
  if (j.contains("mode")) mode = detection_mode_from_string(j["mode"].get<std::string>());
  DetectorConfig d = mode == DetectionMode::sd_knn && variant == EncoderVariant::toy_dense
                         ? DetectorConfig::sd_baseline(geometry)
                         : DetectorConfig::defaults(variant, geometry);
  d.mode = mode;
  if (j.contains("encoder")) apply_encoder(j["encoder"], d.encoder);
  if (j.contains("bank")) {
    const auto& b = j["bank"];
    only_keys(b, "bank", {"scope", "capacity", "eviction", "precision"});
    if (b.contains("scope")) d.bank.scope = bank_scope_from_string(b["scope"].get<std::string>());
    if (b.contains("capacity") && !b["capacity"].is_null()) d.bank.capacity = b["capacity"].get<std::size_t>();
    if (b.contains("eviction")) d.bank.eviction = eviction_from_string(b["eviction"].get<std::string>());
    if (b.contains("precision")) d.bank.precision = precision_from_string(b["precision"].get<std::string>());
  }
  read(j, "threshold", d.threshold);
  read(j, "knn_k", d.knn_k);
  read(j, "knn_distance", d.knn_distance);
  if (j.contains("action")) d.action = defense_action_from_string(j["action"].get<std::string>());
  read(j, "append_flagged", d.append_flagged);
  read(j, "rate_limit_flags", d.rate_limit_flags);
  read(j, "rate_limit_window_ms", d.rate_limit_window_ms);
  return d;
}

json dump_detector(const DetectorConfig& d) {
  return {{"encoder", dump_encoder(d.encoder)},
          {"bank",
           {{"scope", std::string(to_string(d.bank.scope))},
            {"capacity", d.bank.capacity ? json(*d.bank.capacity) : json(nullptr)},
            {"eviction", std::string(to_string(d.bank.eviction))},
            {"precision", precision_name(d.bank.precision)}}},
          {"threshold", d.threshold},
          {"mode", std::string(to_string(d.mode))},
          {"knn_k", d.knn_k},
          {"knn_distance", d.knn_distance},
          {"action", std::string(to_string(d.action))},
          {"append_flagged", d.append_flagged},
          {"rate_limit_flags", d.rate_limit_flags},
          {"rate_limit_window_ms", d.rate_limit_window_ms}};
}

AttackConfig parse_attack(const json& j) {
  only_keys(j, "attack", {"kind", "epsilon", "max_queries", "step_size", "seed", "zoo_batch", "zoo_h",
                          "nes_population", "nes_sigma", "square_p_init", "init_draws",
                          "boundary_spherical_step", "boundary_source_step", "boundary_step_adapt",
                          "hsja_init_evals", "hsja_max_evals", "hsja_gamma", "oars",
                          "whitebox_pgd_steps", "whitebox_pgd_step"});
  AttackConfig a;
  if (j.contains("kind")) a.kind = attack_kind_from_string(j["kind"].get<std::string>());
  read(j, "epsilon", a.epsilon);
  read(j, "max_queries", a.max_queries);
  read(j, "step_size", a.step_size);
  read(j, "seed", a.seed);
  read(j, "zoo_batch", a.zoo_batch);
  read(j, "zoo_h", a.zoo_h);
  read(j, "nes_population", a.nes_population);
  read(j, "nes_sigma", a.nes_sigma);
  read(j, "square_p_init", a.square_p_init);
  read(j, "init_draws", a.init_draws);
  read(j, "boundary_spherical_step", a.boundary_spherical_step);
  read(j, "boundary_source_step", a.boundary_source_step);
  read(j, "boundary_step_adapt", a.boundary_step_adapt);
  read(j, "hsja_init_evals", a.hsja_init_evals);
  read(j, "hsja_max_evals", a.hsja_max_evals);
  read(j, "hsja_gamma", a.hsja_gamma);
  if (j.contains("oars")) {
    const auto& o = j["oars"];
    if (o.is_boolean()) {
      a.oars.enabled = o.get<bool>();
    } else {
      only_keys(o, "oars", {"enabled", "growth", "max_resamples"});
      a.oars.enabled = true;
      read(o, "enabled", a.oars.enabled);
      read(o, "growth", a.oars.growth);
      read(o, "max_resamples", a.oars.max_resamples);
    }
  }
  read(j, "whitebox_pgd_steps", a.whitebox_pgd_steps);
  read(j, "whitebox_pgd_step", a.whitebox_pgd_step);
  return a;
}

json dump_attack(const AttackConfig& a) {
  return {{"kind", std::string(to_string(a.kind))},
          {"epsilon", a.epsilon},
          {"max_queries", a.max_queries},
          {"step_size", a.step_size},
          {"seed", a.seed},
          {"zoo_batch", a.zoo_batch},
          {"zoo_h", a.zoo_h},
          {"nes_population", a.nes_population},
          {"nes_sigma", a.nes_sigma},
          {"square_p_init", a.square_p_init},
          {"init_draws", a.init_draws},
          {"boundary_spherical_step", a.boundary_spherical_step},
          {"boundary_source_step", a.boundary_source_step},
          {"boundary_step_adapt", a.boundary_step_adapt},
          {"hsja_init_evals", a.hsja_init_evals},
          {"hsja_max_evals", a.hsja_max_evals},
          {"hsja_gamma", a.hsja_gamma},
          {"oars", {{"enabled", a.oars.enabled}, {"growth", a.oars.growth}, {"max_resamples", a.oars.max_resamples}}},
          {"whitebox_pgd_steps", a.whitebox_pgd_steps},
          {"whitebox_pgd_step", a.whitebox_pgd_step}};
}

json parse_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  const auto j = parse_text(json_text);
  only_keys(j, "experiment", {"name", "task", "detector", "attacks", "benign", "seed",
                              "halt_on_detection", "fresh_detector_per_instance", "interleave",
                              "trace_log", "csv"});
  ExperimentConfig c;
  try {
    read(j, "name", c.name);
    if (j.contains("task")) c.task = parse_task(j["task"]);
    if (j.contains("detector") && !j["detector"].is_null()) c.detector = parse_detector(j["detector"], c.task.geometry);
    if (j.contains("attacks")) {
      for (const auto& a : j["attacks"]) {
        only_keys(a, "attacks[]", {"attack", "instances", "users"});
        AttackPlan p;
        if (a.contains("attack")) p.attack = parse_attack(a["attack"]);
        read(a, "instances", p.instances);
        read(a, "users", p.users);
        c.attacks.push_back(p);
      }
    }
    if (j.contains("benign")) {
      const auto& b = j["benign"];
      only_keys(b, "benign", {"count", "users", "seed"});
      read(b, "count", c.benign.count);
      read(b, "users", c.benign.users);
      read(b, "seed", c.benign.seed);
    }
    read(j, "seed", c.seed);
    if (j.contains("halt_on_detection") && !j["halt_on_detection"].is_null()) {
      c.halt_on_detection = j["halt_on_detection"].get<bool>();
    }
    read(j, "fresh_detector_per_instance", c.fresh_detector_per_instance);
    if (j.contains("interleave")) c.interleave = interleave_from_string(j["interleave"].get<std::string>());
    read(j, "trace_log", c.trace_log);
    read(j, "csv", c.csv);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string dump_experiment_config(const ExperimentConfig& c) {
  json attacks = json::array();
  for (const auto& p : c.attacks) {
    attacks.push_back({{"attack", dump_attack(p.attack)}, {"instances", p.instances}, {"users", p.users}});
  }
  json j = {{"name", c.name},
            {"task", dump_task(c.task)},
            {"detector", c.detector ? dump_detector(*c.detector) : json(nullptr)},
            {"attacks", attacks},
            {"benign", {{"count", c.benign.count}, {"users", c.benign.users}, {"seed", c.benign.seed}}},
            {"seed", c.seed},
            {"halt_on_detection", c.halt_on_detection ? json(*c.halt_on_detection) : json(nullptr)},
            {"fresh_detector_per_instance", c.fresh_detector_per_instance},
            {"interleave", std::string(to_string(c.interleave))},
            {"trace_log", c.trace_log},
            {"csv", c.csv}};
  return j.dump(2);
}

DetectorConfig parse_detector_config(std::string_view json_text, const Geometry& geometry) {
  try {
    auto d = parse_detector(parse_text(json_text), geometry);
    d.validate();
    return d;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
}

std::string dump_detector_config(const DetectorConfig& cfg) { return dump_detector(cfg).dump(2); }

AttackConfig parse_attack_config(std::string_view json_text) {
  try {
    auto a = parse_attack(parse_text(json_text));
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("attack config: ") + e.what());
  }
}

TradeoffConfig parse_tradeoff_config(std::string_view json_text) {
  const auto j = parse_text(json_text);
  only_keys(j, "tradeoff", {"dim", "sigma", "beta", "center_norm", "thresholds", "samples", "seed",
                            "shards", "encoder"});
  TradeoffConfig t;
  try {
    read(j, "dim", t.dim);
    read(j, "sigma", t.sigma);
    read(j, "beta", t.beta);
    read(j, "center_norm", t.center_norm);
    read(j, "thresholds", t.thresholds);
    read(j, "samples", t.samples);
    read(j, "seed", t.seed);
    read(j, "shards", t.shards);
    if (j.contains("encoder")) t.encoder = tradeoff_encoder_from_string(j["encoder"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tradeoff config: ") + e.what());
  }
  t.validate();
  return t;
}

std::string dump_tradeoff_config(const TradeoffConfig& t) {
  json j = {{"dim", t.dim},       {"sigma", t.sigma},   {"beta", t.beta},
            {"center_norm", t.center_norm}, {"thresholds", t.grid()}, {"samples", t.samples},
            {"seed", t.seed},     {"shards", t.shards}, {"encoder", std::string(to_string(t.encoder))}};
  return j.dump(2);
}

}  // namespace advqdet
