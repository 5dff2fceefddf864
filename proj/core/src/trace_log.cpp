#include "advqdet/trace_log.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "advqdet/errors.hpp"
#include "json.hpp"

namespace advqdet {

namespace {

using nlohmann::json;

json score_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double score_value(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void write_trace_log(std::ostream& out, const std::vector<AttackTrace>& traces,
                     const std::vector<BenignVerdict>& benign) {
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    json head = {{"type", "trace"},
                 {"instance", i},
                 {"attack", t.attack},
                 {"seed", t.seed},
                 {"success", t.success},
                 {"queries_used", t.queries_used},
                 {"first_flag_index", t.first_flag_index ? json(*t.first_flag_index) : json(nullptr)},
                 {"ball_constrained", t.ball_constrained},
                 {"init_failed", t.init_failed},
                 {"halted_on_detection", t.halted_on_detection},
                 {"stuck_steps", t.stuck_steps}};
    out << head.dump() << '\n';
    for (const auto& q : t.log) {
      json rec = {{"type", "query"},   {"instance", i},           {"seq", q.seq},
                  {"flagged", q.flagged}, {"score", score_json(q.score)}, {"action", q.action},
                  {"served_label", q.served_label}, {"linf", q.linf}};
      out << rec.dump() << '\n';
    }
  }
  for (const auto& b : benign) {
    json rec = {{"type", "benign"}, {"user", b.user_id}, {"flagged", b.flagged},
                {"score", score_json(b.score)}};
    out << rec.dump() << '\n';
  }
}

void write_trace_log(const std::filesystem::path& path, const std::vector<AttackTrace>& traces,
                     const std::vector<BenignVerdict>& benign) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_trace_log(out, traces, benign);
  if (!out) throw Error("failed writing " + path.string());
}

TraceLog read_trace_log(std::istream& in) {
  TraceLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "trace") {
        AttackTrace t;
        t.attack = j.at("attack").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.success = j.at("success").get<bool>();
        t.queries_used = j.at("queries_used").get<std::size_t>();
        if (!j.at("first_flag_index").is_null()) t.first_flag_index = j["first_flag_index"].get<std::size_t>();
        t.ball_constrained = j.value("ball_constrained", true);
        t.init_failed = j.value("init_failed", false);
        t.halted_on_detection = j.value("halted_on_detection", false);
        t.stuck_steps = j.value("stuck_steps", std::size_t{0});
        log.traces.push_back(std::move(t));
      } else if (type == "query") {
        if (log.traces.empty()) throw FormatError("query record before any trace record");
        QueryLogRecord q;
        q.seq = j.at("seq").get<std::uint64_t>();
        q.flagged = j.at("flagged").get<bool>();
        q.score = score_value(j.at("score"));
        q.action = j.at("action").get<std::string>();
        q.served_label = j.at("served_label").get<int>();
        q.linf = j.at("linf").get<double>();
        log.traces.back().log.push_back(std::move(q));
      } else if (type == "benign") {
        log.benign.push_back({j.at("user").get<std::string>(), j.at("flagged").get<bool>(),
                              score_value(j.at("score"))});
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError("trace log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

TraceLog read_trace_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_trace_log(in);
}

}  // namespace advqdet
