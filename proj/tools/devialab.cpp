// devialab command-line driver.
//
// Exit codes: 0 success, 2 usage error (bad flags, missing inputs, invalid
// config), 1 anything that fails at run time. Errors are a single stderr
// line:  error kind=<kind> message="<json-escaped text>"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "devialab/error.hpp"
#include "devialab/pipeline/config.hpp"
#include "devialab/pipeline/runs.hpp"
#include "devialab/reweight/weights.hpp"
#include "devialab/synth/dataset.hpp"

namespace fs = std::filesystem;
using namespace devialab;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << "error kind=" << kind << " message=" << nlohmann::json(message).dump() << std::endl;
  return code;
}

// Inputs that must exist before anything runs; a miss is a usage error.
void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ConfigError("no such file: " + p.string());
}
void require_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw ConfigError("no such directory: " + p.string());
}

pipeline::RunConfig config_for_cli(const fs::path& path) {
  require_file(path);
  pipeline::RunConfig c = pipeline::load_config(path);
  pipeline::apply_seed_override(c, &std::cerr);
  return c;
}

pipeline::LoadedRun run_for_cli(const fs::path& run_dir, const fs::path& data_dir) {
  require_dir(run_dir);
  require_file(data_dir / "manifest.json");
  return pipeline::load_run(run_dir);
}

int cmd_gen_data(const fs::path& config_path, const fs::path& out_dir) {
  const auto config = config_for_cli(config_path);
  const auto m = synth::build_dataset(config.dataset, out_dir);
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "wrote " << m.records.size() << " records to " << out_dir.string() << " (nominal "
            << m.counts.nominal << ", contaminant " << m.counts.contaminant << ", pseudo " << m.counts.pseudo
            << ", fewshot " << m.counts.fewshot << ", test " << m.counts.test_normal + m.counts.test_anomalous
            << ")\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir) {
  const auto config = config_for_cli(config_path);
  require_file(data_dir / "manifest.json");
  pipeline::train_run(config, data_dir, out_dir, &std::cerr);
  std::cout << "checkpoint " << pipeline::RunArtifacts{out_dir}.checkpoint().string() << '\n';
  return 0;
}

int cmd_score(const fs::path& run_dir, const fs::path& data_dir) {
  const auto run = run_for_cli(run_dir, data_dir);
  const auto rows = pipeline::score_run(run, data_dir);
  pipeline::write_scores(run.artifacts.scores(), rows);
  std::cout << "scores " << run.artifacts.scores().string() << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_localize(const fs::path& run_dir, const fs::path& data_dir) {
  const auto run = run_for_cli(run_dir, data_dir);
  pipeline::localize_run(run, data_dir);
  std::cout << "heatmaps " << run.artifacts.heatmaps().string() << "\nmasks " << run.artifacts.masks().string()
            << '\n';
  return 0;
}

int cmd_eval(const fs::path& run_dir, const fs::path& data_dir) {
  require_dir(run_dir);
  require_file(data_dir / "manifest.json");
  const auto r = pipeline::eval_run(run_dir, data_dir, nullptr);
  const pipeline::RunArtifacts art{run_dir};
  std::printf("auroc %.4f  auprc %.4f  pixel_auroc %.4f\n", r.auroc, r.auprc, r.pixel_auroc);
  std::printf("cue auroc  dev %.4f  ent %.4f  seg %.4f\n", r.cue_auroc.dev, r.cue_auroc.ent, r.cue_auroc.seg);
  std::cout << "report " << art.report().string() << "\nhistograms " << art.histograms().string() << '\n';
  return 0;
}

int cmd_sweep(const fs::path& config_path, const std::vector<double>& epsilons, const fs::path& out_dir) {
  const auto config = config_for_cli(config_path);
  if (epsilons.size() < 2) throw ConfigError("--epsilons needs at least two values");
  const auto legs = pipeline::sweep(config, epsilons, out_dir, &std::cerr);
  std::printf("%-8s %-8s %-8s %-8s\n", "epsilon", "auroc", "auprc", "pixel");
  for (const auto& leg : legs) {
    std::printf("%-8.2f %-8.4f %-8.4f %-8.4f\n", leg.epsilon, leg.result.auroc, leg.result.auprc,
                leg.result.pixel_auroc);
  }
  std::vector<metrics::LevelMetric> levels;
  for (const auto& leg : legs) levels.push_back({leg.epsilon, leg.result.auroc});
  for (const auto& d : metrics::robustness_table(levels)) {
    std::printf("drop %.2f -> %.2f: %.2f%%\n", d.eps_from, d.eps_to, d.drop_pct);
  }
  std::cout << "report " << (out_dir / "report.json").string() << '\n';
  return 0;
}

int cmd_weights_demo(const std::vector<double>& losses, double alpha, double lambda) {
  const auto w = alpha == 1.0 ? reweight::kl_weights(losses, lambda) : reweight::alpha_weights(losses, alpha, lambda);
  reweight::write_weight_table(std::cout, losses, w);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"devialab: contamination-robust anomaly detection on synthetic textures"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path, data_dir, out_dir, run_dir;
  std::vector<double> epsilons, losses;
  double alpha = 0.1, lambda = 0.1;
  std::string sweep_out = "sweep";

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("config", config_path, "run config JSON")->required();
  gen->add_option("out-dir", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("config", config_path, "run config JSON")->required();
  train->add_option("data-dir", data_dir, "dataset directory")->required();
  train->add_option("out-dir", out_dir, "run directory to create")->required();

  auto* score = app.add_subcommand("score", "write scores.csv for the test split");
  score->add_option("run-dir", run_dir)->required();
  score->add_option("data-dir", data_dir)->required();

  auto* loc = app.add_subcommand("localize", "write heatmap and mask PGMs for the test split");
  loc->add_option("run-dir", run_dir)->required();
  loc->add_option("data-dir", data_dir)->required();

  auto* eval = app.add_subcommand("eval", "write report.json and histograms.csv");
  eval->add_option("run-dir", run_dir)->required();
  eval->add_option("data-dir", data_dir)->required();

  auto* sw = app.add_subcommand("sweep", "gen-data, train and eval per contamination level");
  sw->add_option("config", config_path, "run config JSON")->required();
  sw->add_option("--epsilons", epsilons, "comma-separated contamination ratios")->delimiter(',')->required();
  sw->add_option("--out", sweep_out, "output directory")->capture_default_str();

  auto* wd = app.add_subcommand("weights-demo", "print divergence weights for a loss vector as CSV");
  wd->add_option("--losses", losses, "comma-separated per-sample losses")->delimiter(',')->required();
  wd->add_option("--alpha", alpha, "divergence order; 1 selects KL")->capture_default_str();
  wd->add_option("--lambda", lambda, "temperature")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kUsageError);
  }

  try {
    if (*gen) return cmd_gen_data(config_path, out_dir);
    if (*train) return cmd_train(config_path, data_dir, out_dir);
    if (*score) return cmd_score(run_dir, data_dir);
    if (*loc) return cmd_localize(run_dir, data_dir);
    if (*eval) return cmd_eval(run_dir, data_dir);
    if (*sw) return cmd_sweep(config_path, epsilons, sweep_out);
    if (*wd) return cmd_weights_demo(losses, alpha, lambda);
  } catch (const ConfigError& e) {
    return report_error("config", e.what(), kUsageError);
  } catch (const DomainError& e) {
    return report_error("domain", e.what(), kUsageError);
  } catch (const IoError& e) {
    return report_error("io", e.what(), kUsageError);
  } catch (const TrainingDiverged& e) {
    return report_error("diverged", e.what(), kRuntimeFailure);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), kRuntimeFailure);
  }
  return report_error("usage", "no subcommand", kUsageError);
}
