// microseg: explainable customer micro-segmentation from LSTM state-space
// trajectories. Subcommands cover the full pipeline; `run` executes it end
// to end with one master seed.

#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "microseg/errors.hpp"
#include "microseg/jsonio.hpp"
#include "microseg/pipeline.hpp"
#include "microseg/rnn.hpp"

namespace {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheckFailed = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"explainable customer micro-segmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  bool verbose = false;
  app.add_option("--seed", seed, "master seed")->expected(1);
  app.add_option("--config", config_path, "configuration file (JSON)");
  app.add_option("--out", out, "output file or directory");
  app.add_flag("--verbose", verbose, "log stage progress to stderr");

  auto* synth_cmd = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  auto* score_cmd = app.add_subcommand("score", "aggregate transactions and score traits");
  std::string transactions_csv, coefficients_csv;
  std::size_t score_window = 1;
  score_cmd->add_option("--transactions", transactions_csv, "transactions.csv")->required();
  score_cmd->add_option("--coeffs", coefficients_csv, "coefficients.csv")->required();
  score_cmd->add_option("--window", score_window, "buckets per aggregation window");

  auto* train_cmd = app.add_subcommand("train", "train the LSTM trait regressor");
  std::string data_dir, model_path;
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();

  auto* extract_cmd = app.add_subcommand("extract", "extract hidden-state trajectories");
  extract_cmd->add_option("--data", data_dir, "dataset directory")->required();
  extract_cmd->add_option("--model", model_path, "model.json")->required();
  std::size_t extract_window = 1;
  extract_cmd->add_option("--window", extract_window, "aggregation window in periods");

  auto* explain_cmd = app.add_subcommand("explain", "fit the linear surrogate and fidelity report");
  explain_cmd->add_option("--data", data_dir, "dataset directory")->required();
  explain_cmd->add_option("--model", model_path, "model.json")->required();
  std::string out_dir;
  double nonzero_threshold = 0.1;
  std::string direction_mode = "net_displacement";
  explain_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  explain_cmd->add_option("--nonzero-threshold", nonzero_threshold,
                          "non-zero coefficient threshold factor");
  explain_cmd->add_option("--direction-mode", direction_mode,
                          "net_displacement or final_point");

  auto* cluster_cmd = app.add_subcommand("cluster", "build the trait-ordered hierarchy");
  std::string angles_csv, traits_csv;
  std::size_t depth = 4;
  cluster_cmd->add_option("--angles", angles_csv, "angles.csv")->required();
  cluster_cmd->add_option("--traits", traits_csv, "traits.csv")->required();
  cluster_cmd->add_option("--depth", depth, "hierarchy depth (1..4)");

  auto* stability_cmd = app.add_subcommand("stability", "compare aggregation windows");
  stability_cmd->add_option("--data", data_dir, "dataset directory")->required();
  stability_cmd->add_option("--model", model_path, "model.json")->required();
  std::size_t coarse = 6, fine = 1;
  stability_cmd->add_option("--coarse", coarse, "coarse window in periods");
  stability_cmd->add_option("--fine", fine, "fine window in periods");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the BPTT");

  auto* run_cmd = app.add_subcommand("run", "full pipeline: synth through plot data");
  bool check = false;
  run_cmd->add_flag("--check", check, "exit 4 when a report-level threshold fails");

  auto* plot_cmd = app.add_subcommand("plot-data", "emit figure CSVs from pipeline artifacts");
  std::string artifact_dir;
  plot_cmd->add_option("--dir", artifact_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) {
      if (out.empty()) throw UsageError("synth: --out <dir> is required");
      microseg::pipeline::cmd_synth(config_path, seed, out);
    } else if (*score_cmd) {
      if (out.empty()) throw UsageError("score: --out <dir> is required");
      microseg::pipeline::cmd_score(transactions_csv, coefficients_csv, score_window, out);
    } else if (*train_cmd) {
      if (out.empty()) throw UsageError("train: --out <model.json> is required");
      microseg::pipeline::cmd_train(data_dir, config_path, seed, out);
    } else if (*extract_cmd) {
      if (out.empty()) throw UsageError("extract: --out <trajectories.csv> is required");
      microseg::pipeline::cmd_extract(model_path, data_dir, out, extract_window);
    } else if (*explain_cmd) {
      microseg::pipeline::cmd_explain(model_path, data_dir, out_dir, nonzero_threshold,
                                      direction_mode);
    } else if (*cluster_cmd) {
      if (out.empty()) throw UsageError("cluster: --out <hierarchy.json> is required");
      microseg::pipeline::cmd_cluster(angles_csv, traits_csv, depth, out, seed.value_or(42));
    } else if (*stability_cmd) {
      if (out.empty()) throw UsageError("stability: --out <stability.csv> is required");
      microseg::pipeline::cmd_stability(model_path, data_dir, coarse, fine, out);
    } else if (*gradcheck_cmd) {
      const double err = microseg::rnn::gradient_check_from_seed(seed.value_or(42));
      std::cout << "gradcheck max relative error: " << microseg::jsonio::format_double(err)
                << "\n";
      return err < 1e-4 ? kExitOk : kExitNumeric;
    } else if (*run_cmd) {
      if (out.empty()) throw UsageError("run: --out <dir> is required");
      microseg::pipeline::RunConfig config =
          config_path.empty()
              ? microseg::pipeline::default_run_config(seed.value_or(42))
              : microseg::pipeline::load_run_config(config_path, seed);
      const auto report =
          microseg::pipeline::run_pipeline(config, out, verbose ? &std::cerr : nullptr);
      if (check) {
        const auto outcome = microseg::pipeline::evaluate_report_checks(report);
        if (!outcome.all_passed) {
          std::cerr << "run --check: failed thresholds:\n" << outcome.failures;
          return kExitCheckFailed;
        }
      }
    } else if (*plot_cmd) {
      microseg::pipeline::emit_plot_data(artifact_dir, seed.value_or(42));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const microseg::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const microseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
