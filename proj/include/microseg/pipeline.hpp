#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "microseg/jsonio.hpp"
#include "microseg/rnn.hpp"
#include "microseg/synth.hpp"

namespace microseg::pipeline {

struct SurrogateParams {
  double nonzero_threshold = 0.1;
  std::string direction_mode = "net_displacement";  // or "final_point"
};

struct SegmentationParams {
  std::size_t depth = 4;
  std::size_t kmeans_restarts = 20;
  std::size_t null_permutations = 20;
  double course_change_threshold = 0.7853981633974483;  // pi/4
  std::size_t coarse_window = 0;  // 0 = full history (n_periods)
  std::size_t fine_window = 1;
};

// Full-run configuration. One master seed drives every stage: unless a
// section pins its own seed in the config file, synth.seed and train.seed
// are set to the master seed, and each module derives its private streams
// from fixed offsets (rng::StreamId).
struct RunConfig {
  std::uint64_t seed = 42;
  synth::SynthConfig synth;
  rnn::TrainConfig train;
  SurrogateParams surrogate;
  SegmentationParams segmentation;

  std::size_t resolved_coarse_window() const {
    return segmentation.coarse_window == 0 ? synth.n_periods : segmentation.coarse_window;
  }
};

RunConfig default_run_config(std::uint64_t seed = 42);
// Parses a run config file; `seed_override`, when set, replaces the master
// seed (and the derived module seeds).
RunConfig load_run_config(const std::string& path, std::optional<std::uint64_t> seed_override);
jsonio::Json run_config_to_json(const RunConfig& config);

// Pass/fail summary of the in-run checks (the report-level acceptance
// thresholds evaluated by `run --check`).
struct CheckOutcome {
  bool all_passed = true;
  std::string failures;  // newline-separated descriptions
};

// Executes synth -> score -> train -> extract -> explain -> cluster ->
// stability -> report -> plot data, writing every artifact under out_dir.
// Returns the report document.
jsonio::Json run_pipeline(const RunConfig& config, const std::string& out_dir,
                          std::ostream* log = nullptr);

CheckOutcome evaluate_report_checks(const jsonio::Json& report);

// Writes fig1_trajectories.csv, fig2_angles.csv and fig3_pair.csv from the
// artifacts already present in `artifact_dir`.
void emit_plot_data(const std::string& artifact_dir, std::uint64_t seed);

// File-level subcommand entry points. Each reads its inputs from disk and
// writes the named artifacts; errors surface as Data/Numeric exceptions.
void cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed,
               const std::string& out_dir);
void cmd_score(const std::string& transactions_csv, const std::string& coefficients_csv,
               std::size_t window, const std::string& out_dir);
void cmd_train(const std::string& data_dir, const std::string& config_path,
               std::optional<std::uint64_t> seed, const std::string& model_out);
void cmd_extract(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_csv, std::size_t window);
void cmd_explain(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_dir, double nonzero_threshold,
                 const std::string& direction_mode);
void cmd_cluster(const std::string& angles_csv, const std::string& traits_csv, std::size_t depth,
                 const std::string& out_json, std::uint64_t seed);
void cmd_stability(const std::string& model_path, const std::string& data_dir, std::size_t coarse,
                   std::size_t fine, const std::string& out_csv);

}  // namespace microseg::pipeline
