#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "advqdet/analysis.hpp"
#include "advqdet/bank.hpp"
#include "advqdet/config_io.hpp"
#include "advqdet/detector.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/exchange.hpp"
#include "advqdet/filter_protocol.hpp"
#include "advqdet/harness.hpp"
#include "advqdet/synthetic.hpp"
#include "advqdet/toy_encoder.hpp"
#include "advqdet/trace_log.hpp"

namespace {

using namespace advqdet;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Precision precision_from(const std::string& s) {
  if (s == "single" || s == "f32") return Precision::single;
  if (s == "half" || s == "f16") return Precision::half;
  throw ConfigError("unknown precision: " + s);
}

struct TaskOptions {
  int height = 40;
  int width = 40;
  int channels = 3;
  std::uint64_t seed = 0;

  SyntheticTaskConfig config() const {
    SyntheticTaskConfig c;
    c.geometry = {height, width, channels};
    c.seed = seed;
    return c;
  }
};

void add_task_options(CLI::App* cmd, TaskOptions& t) {
  cmd->add_option("--height", t.height, "Image height of the synthetic task")->capture_default_str();
  cmd->add_option("--width", t.width, "Image width of the synthetic task")->capture_default_str();
  cmd->add_option("--channels", t.channels, "Channels of the synthetic task")->capture_default_str();
  cmd->add_option("--task-seed", t.seed, "Seed of the synthetic task patterns")->capture_default_str();
}

int cmd_detect_serve(const std::string& config_path, const std::string& variant,
                     const std::string& model_path, const std::string& save_bank,
                     const TaskOptions& task) {
  const SyntheticTask synth(task.config());
  const TargetModel victim = model_path.empty() ? synth.victim() : TargetModel::load(model_path);
  const Geometry g = victim.geometry();
  DetectorConfig dcfg = config_path.empty()
                            ? DetectorConfig::defaults(encoder_variant_from_string(variant), g)
                            : parse_detector_config(read_text(config_path), g);
  Detector detector(dcfg);

  std::size_t served = 0;
  std::size_t flagged = 0;
  while (auto frame = read_frame(STDIN_FILENO)) {
    const QueryRecord q = decode_filter_request(*frame);
    const Verdict v = detector.detect_and_serve(q, victim);
    write_frame(STDOUT_FILENO, encode_filter_response(to_filter_response(v)));
    ++served;
    if (v.flagged) ++flagged;
  }
  std::fprintf(stderr, "detect-serve: %zu queries, %zu flagged\n", served, flagged);
  if (!save_bank.empty()) detector.bank().save(save_bank);
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& csv_out,
              const std::string& log_out, bool print_config) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (!csv_out.empty()) cfg.csv = csv_out;
  if (!log_out.empty()) cfg.trace_log = log_out;
  if (print_config) {
    std::cout << dump_experiment_config(cfg) << "\n";
    return 0;
  }
  const ExperimentResult result = run_experiment(cfg);
  std::cout << "# " << cfg.name << "\n" << format_table(result.report);
  if (cfg.csv.empty()) std::cout << "\n" << format_csv(result.report);
  return 0;
}

int cmd_report(const std::string& log_path, const std::string& csv_out) {
  const TraceLog log = read_trace_log(std::filesystem::path(log_path));
  const MetricsReport report = compute_metrics(log.traces, log.benign);
  std::cout << format_table(report);
  if (csv_out.empty()) {
    std::cout << "\n" << format_csv(report);
  } else {
    write_text(csv_out, format_csv(report));
  }
  return 0;
}

int cmd_estimate_storage(std::uint64_t users, std::uint64_t queries, std::uint64_t dim,
                         const std::string& precision) {
  const auto est = storage_estimate(users, queries, dim, precision_from(precision));
  std::printf("users=%llu queries_per_user=%llu dim=%llu precision=%s\n",
              static_cast<unsigned long long>(users), static_cast<unsigned long long>(queries),
              static_cast<unsigned long long>(dim), precision.c_str());
  std::printf("bytes=%.0f\nGiB=%.2f\n", est.bytes, est.gib);
  return 0;
}

int cmd_tradeoff(const std::string& config_path, TradeoffConfig cli, const std::string& out) {
  TradeoffConfig cfg = config_path.empty() ? cli : parse_tradeoff_config(read_text(config_path));
  const auto curve = tradeoff_curve(cfg);
  const std::string csv = tradeoff_csv(curve);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return 0;
}

int cmd_embed_inspect(const std::string& path, std::size_t show) {
  const EmbeddingFile f = read_embedding_file(path);
  std::printf("dtype=%s dim=%u count=%zu\n", f.dtype == ValueType::f32 ? "f32" : "f16", f.dim,
              f.records.size());
  for (std::size_t i = 0; i < f.records.size() && i < show; ++i) {
    const auto& r = f.records[i];
    std::printf("%s", to_hex(r.key).c_str());
    for (std::size_t j = 0; j < r.values.size() && j < 4; ++j) std::printf(" %.6g", r.values[j]);
    std::printf("%s\n", r.values.size() > 4 ? " ..." : "");
  }
  return 0;
}

int cmd_embed_build(const std::string& images_dir, const std::string& out, const std::string& dtype,
                    int pool, double gain) {
  const ToyFeatureEncoder enc(pool, gain);
  EmbeddingFile f;
  f.dtype = dtype == "f16" ? ValueType::f16 : ValueType::f32;
  for (const auto& img : load_image_directory(images_dir)) {
    EmbeddingRecord r{content_digest(img), enc.features(img)};
    f.dim = static_cast<std::uint32_t>(r.values.size());
    f.records.push_back(std::move(r));
  }
  write_embedding_file(out, f);
  std::printf("wrote %zu records of dim %u to %s\n", f.records.size(), f.dim, out.c_str());
  return 0;
}

int cmd_embed_digest(const std::vector<std::string>& paths) {
  for (const auto& p : paths) {
    std::printf("%s  %s\n", to_hex(content_digest(read_image_file(p))).c_str(), p.c_str());
  }
  return 0;
}

int cmd_sample_images(const TaskOptions& task, std::size_t count, std::uint64_t seed,
                      const std::string& out_dir) {
  const SyntheticTask synth(task.config());
  std::filesystem::create_directories(out_dir);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06zu.aqim", i);
    write_image_file(std::filesystem::path(out_dir) / name, synth.sample(rng).image);
  }
  return 0;
}

int cmd_serve_encoder(int pool, double gain) {
  const ToyFeatureEncoder enc(pool, gain);
  serve_embedding_protocol(STDIN_FILENO, STDOUT_FILENO,
                           [&](const ImageTensor& img) { return enc.features(img); });
  return 0;
}

int cmd_export_victim(const TaskOptions& task, const std::string& out) {
  SyntheticTask(task.config()).victim().save(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stateful detection of query-based adversarial attacks"};
  app.require_subcommand(1);

  TaskOptions task;

  auto* serve = app.add_subcommand("detect-serve", "Filter framed queries from stdin through a detector");
  std::string serve_config, serve_variant = "pixel-hash", serve_model, serve_bank;
  serve->add_option("--config", serve_config, "Detector JSON config");
  serve->add_option("--encoder", serve_variant, "Encoder variant when no config is given")
      ->capture_default_str();
  serve->add_option("--model", serve_model, "AQTM victim weights (default: synthetic victim)");
  serve->add_option("--save-bank", serve_bank, "Write the dense bank here on exit");
  add_task_options(serve, task);

  auto* bench = app.add_subcommand("bench", "Run an experiment config");
  std::string bench_config, bench_csv, bench_log;
  bool bench_print = false;
  bench->add_option("config", bench_config, "Experiment JSON config")->required();
  bench->add_option("--csv", bench_csv, "Override the CSV output path");
  bench->add_option("--trace-log", bench_log, "Override the trace log path");
  bench->add_flag("--print-config", bench_print, "Print the resolved config and exit");

  auto* report = app.add_subcommand("report", "Recompute metrics from a trace log");
  std::string report_log, report_csv;
  report->add_option("log", report_log, "Trace log (JSON lines)")->required();
  report->add_option("--csv", report_csv, "Write the CSV table here");

  auto* storage = app.add_subcommand("estimate-storage", "Bank storage for a deployment size");
  std::uint64_t st_users = 1000000, st_queries = 100, st_dim = 512;
  std::string st_precision = "single";
  storage->add_option("--users", st_users)->capture_default_str();
  storage->add_option("--queries", st_queries, "Queries per user")->capture_default_str();
  storage->add_option("--dim", st_dim)->capture_default_str();
  storage->add_option("--precision", st_precision, "single or half")->capture_default_str();

  auto* tradeoff = app.add_subcommand("tradeoff", "Monte Carlo detection / false-positive curve");
  TradeoffConfig tcfg;
  std::string tr_config, tr_out;
  tradeoff->add_option("--config", tr_config, "Tradeoff JSON config");
  tradeoff->add_option("--dim", tcfg.dim)->capture_default_str();
  tradeoff->add_option("--sigma", tcfg.sigma)->capture_default_str();
  tradeoff->add_option("--beta", tcfg.beta)->capture_default_str();
  tradeoff->add_option("--center-norm", tcfg.center_norm)->capture_default_str();
  tradeoff->add_option("--samples", tcfg.samples)->capture_default_str();
  tradeoff->add_option("--seed", tcfg.seed)->capture_default_str();
  tradeoff->add_option("--thresholds", tcfg.thresholds, "Explicit thresholds")->delimiter(',');
  tradeoff->add_option("--out", tr_out, "CSV output path (default stdout)");

  auto* embed = app.add_subcommand("embed-file", "Embedding exchange file utilities");
  embed->require_subcommand(1);
  auto* inspect = embed->add_subcommand("inspect", "Print header and leading records");
  std::string in_path;
  std::size_t in_show = 5;
  inspect->add_option("file", in_path)->required();
  inspect->add_option("--show", in_show)->capture_default_str();
  auto* build = embed->add_subcommand("build", "Embed a directory of images with the toy encoder");
  std::string b_dir, b_out, b_dtype = "f32";
  int b_pool = 8;
  double b_gain = 15.0;
  build->add_option("images", b_dir)->required();
  build->add_option("--out", b_out)->required();
  build->add_option("--dtype", b_dtype)->check(CLI::IsMember({"f32", "f16"}))->capture_default_str();
  build->add_option("--pool", b_pool)->capture_default_str();
  build->add_option("--gain", b_gain)->capture_default_str();
  auto* digest = embed->add_subcommand("digest", "Content digests of image files");
  std::vector<std::string> d_paths;
  digest->add_option("images", d_paths)->required();

  auto* sample = app.add_subcommand("sample-images", "Write synthetic task images to a directory");
  std::size_t s_count = 10;
  std::uint64_t s_seed = 1;
  std::string s_out;
  sample->add_option("--count", s_count)->capture_default_str();
  sample->add_option("--seed", s_seed)->capture_default_str();
  sample->add_option("--out", s_out)->required();
  add_task_options(sample, task);

  auto* serve_enc = app.add_subcommand("serve-encoder", "Serve the toy encoder over the embedding protocol");
  int se_pool = 8;
  double se_gain = 15.0;
  serve_enc->add_option("--pool", se_pool)->capture_default_str();
  serve_enc->add_option("--gain", se_gain)->capture_default_str();

  auto* victim = app.add_subcommand("export-victim", "Write the synthetic victim as an AQTM file");
  std::string v_out;
  victim->add_option("--out", v_out)->required();
  add_task_options(victim, task);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_detect_serve(serve_config, serve_variant, serve_model, serve_bank, task);
    if (*bench) return cmd_bench(bench_config, bench_csv, bench_log, bench_print);
    if (*report) return cmd_report(report_log, report_csv);
    if (*storage) return cmd_estimate_storage(st_users, st_queries, st_dim, st_precision);
    if (*tradeoff) return cmd_tradeoff(tr_config, tcfg, tr_out);
    if (*inspect) return cmd_embed_inspect(in_path, in_show);
    if (*build) return cmd_embed_build(b_dir, b_out, b_dtype, b_pool, b_gain);
    if (*digest) return cmd_embed_digest(d_paths);
    if (*sample) return cmd_sample_images(task, s_count, s_seed, s_out);
    if (*serve_enc) return cmd_serve_encoder(se_pool, se_gain);
    if (*victim) return cmd_export_victim(task, v_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "advqdet: %s\n", e.what());
    return 1;
  }
  return 0;
}
