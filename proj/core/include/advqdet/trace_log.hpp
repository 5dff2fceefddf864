#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "advqdet/harness.hpp"

namespace advqdet {

// Line-delimited JSON. One "trace" record per attack instance followed by one
// "query" record per issued query (seq, flagged, score, action, served label,
// L-inf distance), then one "benign" record per benign query.
void write_trace_log(std::ostream& out, const std::vector<AttackTrace>& traces,
                     const std::vector<BenignVerdict>& benign);
void write_trace_log(const std::filesystem::path& path, const std::vector<AttackTrace>& traces,
                     const std::vector<BenignVerdict>& benign);

struct TraceLog {
  std::vector<AttackTrace> traces;
  std::vector<BenignVerdict> benign;
};

TraceLog read_trace_log(std::istream& in);
TraceLog read_trace_log(const std::filesystem::path& path);

}  // namespace advqdet
