// forge: command-line front end for the synthetic CDM X-ray dataset engine.
//
//   forge phantom     --out DIR [--count N]
//   forge generate    --config cfg.json --cts A.json B.json ... --seed N --out DIR [--workers K]
//   forge render-one  --config cfg.json --theta-json theta.json [--ct CT.json] --out DIR
//   forge metrics     --pred DIR --gt DIR [--out report.json] [--csv rows.csv]
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 failure rate exceeded.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forge/forge.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitFailureRate = 3;

void log_line(const std::string& msg) { std::cerr << "[forge] " << msg << "\n"; }

forge::PipelineConfig load_config(const std::string& path) {
  return path.empty() ? forge::PipelineConfig{} : forge::load_pipeline_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  forge::require(static_cast<bool>(out), forge::ErrorKind::kIo, "cannot open " + path.string());
  out << text;
  forge::require(static_cast<bool>(out), forge::ErrorKind::kIo, "write failed: " + path.string());
}

struct PhantomArgs {
  std::string out;
  int count = 2;
  std::string prefix = "phantom";
};

int run_phantom(const PhantomArgs& a) {
  fs::create_directories(a.out);
  const forge::PhantomSpec base;
  for (int i = 0; i < a.count; ++i) {
    const forge::PhantomSpec spec = base.variant(i);
    const fs::path header = fs::path(a.out) / fmt::format("{}{}.json", a.prefix, i);
    forge::write_volume(forge::make_phantom_ct(spec), header, forge::phantom_attributes(spec, i));
    std::cout << header.string() << "\n";
  }
  return kExitOk;
}

struct GenerateArgs {
  std::string config;
  std::vector<std::string> cts;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<int> workers;
  std::optional<int> threads;
  std::optional<int> samples_per_femur;
  bool previews = false;
};

int run_generate(const GenerateArgs& a) {
  forge::PipelineConfig cfg = load_config(a.config);
  if (a.workers) cfg.workers = *a.workers;
  if (a.threads) cfg.threads_per_worker = *a.threads;
  if (a.samples_per_femur) cfg.samples_per_femur = *a.samples_per_femur;
  if (a.previews) cfg.write_previews = true;
  cfg.validate();
  std::vector<fs::path> paths(a.cts.begin(), a.cts.end());
  const auto start = std::chrono::steady_clock::now();
  const forge::GenerateSummary s = forge::generate_dataset(cfg, paths, a.seed, a.out, log_line);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log_line(fmt::format("{} samples: {} rendered, {} reused, {} failed ({:.1f} s)", s.total(), s.rendered, s.reused,
                       s.failures.size(), secs));
  if (s.failure_rate() > cfg.max_failure_rate) {
    log_line(fmt::format("failure rate {:.2f}% exceeds {:.2f}%", 100 * s.failure_rate(), 100 * cfg.max_failure_rate));
    return kExitFailureRate;
  }
  return kExitOk;
}

struct RenderOneArgs {
  std::string config;
  std::string theta;
  std::string ct;
  std::string out;
};

int run_render_one(const RenderOneArgs& a) {
  const forge::PipelineConfig cfg = load_config(a.config);
  nlohmann::json theta;
  try {
    theta = nlohmann::json::parse(forge::detail::read_text(a.theta));
  } catch (const nlohmann::json::parse_error& e) {
    forge::fail(forge::ErrorKind::kParse, a.theta + ": " + e.what());
  }
  if (theta.contains("sample")) theta = theta.at("sample");
  const forge::SampleConfig sc = forge::sample_config_from_json(theta);
  if (!sc.within(cfg.ranges)) log_line("warning: theta lies outside the configured sampling ranges");

  forge::CtVolume ct;
  if (a.ct.empty()) {
    const forge::PhantomSpec spec;
    ct = {sc.ct_id, forge::make_phantom_ct(spec), forge::phantom_attributes(spec, 0)};
  } else {
    ct = forge::load_ct(a.ct);
    ct.id = sc.ct_id;
  }
  forge::SampleRecord rec = forge::render_sample(cfg, ct, sc);
  rec.split = "single";
  forge::write_record(a.out, rec, cfg.write_previews);
  std::cout << forge::record_meta(rec).dump(2) << "\n";
  return kExitOk;
}

struct MetricsArgs {
  std::string pred;
  std::string gt;
  std::string out;
  std::string csv;
  double threshold = 0.5;
  std::string extraction = "gaussian-fit";
};

int run_metrics(const MetricsArgs& a) {
  forge::ExtractionParams ep;
  ep.method = forge::landmark_extraction_from_string(a.extraction);
  const forge::EvaluationResult r = forge::evaluate_directories(a.pred, a.gt, a.threshold, ep);
  for (const auto& id : r.missing) log_line("no prediction for " + id);
  if (r.report.rows.empty()) {
    log_line("no samples evaluated");
    return kExitData;
  }
  const auto d = r.report.dice_stats();
  const auto e = r.report.landmark_stats();
  std::cout << fmt::format("samples {}  dice {:.4f} +/- {:.4f}  landmark error {:.3f} +/- {:.3f} mm\n", d.count, d.mean,
                           d.stddev, e.mean, e.stddev);
  if (!a.out.empty()) write_text(a.out, forge::to_json(r.report).dump(2) + "\n");
  if (!a.csv.empty()) write_text(a.csv, forge::to_csv(r.report));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic X-ray dataset engine for a notched continuum manipulator"};
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Write synthetic lower-limb CT phantoms");
  phantom->add_option("--out", pa.out, "Output directory")->required();
  phantom->add_option("--count", pa.count, "Number of phantom CTs")->check(CLI::PositiveNumber);
  phantom->add_option("--prefix", pa.prefix, "File name prefix (CT ids are <prefix><i>)");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Generate a dataset");
  generate->add_option("--config", ga.config, "Pipeline config JSON (defaults when omitted)")->check(CLI::ExistingFile);
  generate->add_option("--cts", ga.cts, "CT volume headers (.json or .mhd)")->required()->check(CLI::ExistingFile);
  generate->add_option("--seed", ga.seed, "Master seed")->required();
  generate->add_option("--out", ga.out, "Output directory")->required();
  generate->add_option("--workers", ga.workers, "Concurrent samples")->check(CLI::PositiveNumber);
  generate->add_option("--threads", ga.threads, "Threads per sample")->check(CLI::PositiveNumber);
  generate->add_option("--samples-per-femur", ga.samples_per_femur, "Samples per femoral head")->check(CLI::PositiveNumber);
  generate->add_flag("--previews", ga.previews, "Also write 8-bit PNG previews");

  RenderOneArgs ra;
  auto* render = app.add_subcommand("render-one", "Render one sample configuration");
  render->add_option("--config", ra.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  render->add_option("--theta-json", ra.theta, "Sample configuration JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--ct", ra.ct, "CT volume header (default: built-in phantom)")->check(CLI::ExistingFile);
  render->add_option("--out", ra.out, "Output record directory")->required();

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Evaluate predictions against ground truth records");
  metrics->add_option("--pred", ma.pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--gt", ma.gt, "Ground-truth dataset directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--out", ma.out, "Report JSON path");
  metrics->add_option("--csv", ma.csv, "Per-sample CSV path");
  metrics->add_option("--threshold", ma.threshold, "Mask threshold");
  metrics->add_option("--extraction", ma.extraction, "Landmark extraction from belief maps")
      ->check(CLI::IsMember({"gaussian-fit", "centroid", "argmax"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*phantom) return run_phantom(pa);
    if (*generate) return run_generate(ga);
    if (*render) return run_render_one(ra);
    if (*metrics) return run_metrics(ma);
  } catch (const forge::Error& e) {
    log_line(fmt::format("error ({}): {}", forge::to_string(e.kind()), e.what()));
    return kExitData;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return kExitData;
  }
  return kExitUsage;
}
