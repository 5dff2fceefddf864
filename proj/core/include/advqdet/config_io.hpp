#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "advqdet/analysis.hpp"
#include "advqdet/harness.hpp"

namespace advqdet {

// JSON configuration files. Unknown keys are rejected with ConfigError so
// typos do not silently fall back to defaults. A detector section starts from
// DetectorConfig::defaults(encoder.variant, task geometry) and applies the
// keys that are present.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string dump_experiment_config(const ExperimentConfig& cfg);

DetectorConfig parse_detector_config(std::string_view json_text, const Geometry& geometry);
std::string dump_detector_config(const DetectorConfig& cfg);

AttackConfig parse_attack_config(std::string_view json_text);

TradeoffConfig parse_tradeoff_config(std::string_view json_text);
std::string dump_tradeoff_config(const TradeoffConfig& cfg);

}  // namespace advqdet
