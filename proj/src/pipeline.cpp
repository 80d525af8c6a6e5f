#include "microseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <vector>

#include "microseg/artifacts.hpp"
#include "microseg/errors.hpp"
#include "microseg/rng.hpp"
#include "microseg/segmentation.hpp"
#include "microseg/surrogate.hpp"

namespace microseg::pipeline {
namespace {

namespace fs = std::filesystem;
using jsonio::Json;

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

surrogate::DirectionMode parse_direction_mode(const std::string& mode) {
  if (mode == "net_displacement") return surrogate::DirectionMode::net_displacement;
  if (mode == "final_point") return surrogate::DirectionMode::final_point;
  throw ConfigError("direction_mode must be 'net_displacement' or 'final_point'");
}

void log_stage(std::ostream* log, const std::string& name, double seconds) {
  if (log != nullptr) *log << "[microseg] stage " << name << " done in " << seconds << " s\n";
}

}  // namespace

RunConfig default_run_config(std::uint64_t seed) {
  RunConfig config;
  config.seed = seed;
  config.synth.seed = seed;
  config.train.seed = seed;
  return config;
}

RunConfig load_run_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  const Json doc = jsonio::parse_file(path);
  RunConfig config;
  try {
    if (doc.contains("seed")) config.seed = doc.at("seed").get<std::uint64_t>();
    if (seed_override) config.seed = *seed_override;
    config.synth.seed = config.seed;
    config.train.seed = config.seed;

    if (doc.contains("synth")) {
      const auto& s = doc.at("synth");
      auto& c = config.synth;
      if (s.contains("n_customers")) c.n_customers = s.at("n_customers").get<std::size_t>();
      if (s.contains("n_periods")) c.n_periods = s.at("n_periods").get<std::size_t>();
      if (s.contains("k_classes")) c.k_classes = s.at("k_classes").get<std::size_t>();
      if (s.contains("n_nonzero_rows"))
        c.n_nonzero_rows = s.at("n_nonzero_rows").get<std::size_t>();
      if (s.contains("trait_signal_strength"))
        c.trait_signal_strength = s.at("trait_signal_strength").get<double>();
      if (s.contains("noise_scale")) c.noise_scale = s.at("noise_scale").get<double>();
      if (s.contains("regime_switch_fraction"))
        c.regime_switch_fraction = s.at("regime_switch_fraction").get<double>();
      if (s.contains("seed") && !seed_override) c.seed = s.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      auto& c = config.train;
      if (t.contains("learning_rate")) c.learning_rate = t.at("learning_rate").get<double>();
      if (t.contains("epochs")) c.epochs = t.at("epochs").get<std::size_t>();
      if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<std::size_t>();
      if (t.contains("adam_beta1")) c.adam_beta1 = t.at("adam_beta1").get<double>();
      if (t.contains("adam_beta2")) c.adam_beta2 = t.at("adam_beta2").get<double>();
      if (t.contains("adam_eps")) c.adam_eps = t.at("adam_eps").get<double>();
      if (t.contains("forget_bias_init"))
        c.forget_bias_init = t.at("forget_bias_init").get<double>();
      if (t.contains("weight_init_scale"))
        c.weight_init_scale = t.at("weight_init_scale").get<double>();
      if (t.contains("train_fraction")) c.train_fraction = t.at("train_fraction").get<double>();
      if (t.contains("optimizer")) c.optimizer = t.at("optimizer").get<std::string>();
      if (t.contains("seed") && !seed_override) c.seed = t.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("surrogate")) {
      const auto& s = doc.at("surrogate");
      if (s.contains("nonzero_threshold"))
        config.surrogate.nonzero_threshold = s.at("nonzero_threshold").get<double>();
      if (s.contains("direction_mode"))
        config.surrogate.direction_mode = s.at("direction_mode").get<std::string>();
    }
    if (doc.contains("segmentation")) {
      const auto& s = doc.at("segmentation");
      auto& c = config.segmentation;
      if (s.contains("depth")) c.depth = s.at("depth").get<std::size_t>();
      if (s.contains("kmeans_restarts"))
        c.kmeans_restarts = s.at("kmeans_restarts").get<std::size_t>();
      if (s.contains("null_permutations"))
        c.null_permutations = s.at("null_permutations").get<std::size_t>();
      if (s.contains("course_change_threshold"))
        c.course_change_threshold = s.at("course_change_threshold").get<double>();
      if (s.contains("coarse_window")) c.coarse_window = s.at("coarse_window").get<std::size_t>();
      if (s.contains("fine_window")) c.fine_window = s.at("fine_window").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  parse_direction_mode(config.surrogate.direction_mode);
  return config;
}

Json run_config_to_json(const RunConfig& config) {
  Json doc;
  doc["seed"] = config.seed;
  Json synth_json;
  synth_json["n_customers"] = config.synth.n_customers;
  synth_json["n_periods"] = config.synth.n_periods;
  synth_json["k_classes"] = config.synth.k_classes;
  synth_json["n_nonzero_rows"] = config.synth.n_nonzero_rows;
  synth_json["trait_signal_strength"] = config.synth.trait_signal_strength;
  synth_json["noise_scale"] = config.synth.noise_scale;
  synth_json["regime_switch_fraction"] = config.synth.regime_switch_fraction;
  synth_json["seed"] = config.synth.seed;
  doc["synth"] = std::move(synth_json);
  Json train_json;
  train_json["learning_rate"] = config.train.learning_rate;
  train_json["epochs"] = config.train.epochs;
  train_json["batch_size"] = config.train.batch_size;
  train_json["adam_beta1"] = config.train.adam_beta1;
  train_json["adam_beta2"] = config.train.adam_beta2;
  train_json["adam_eps"] = config.train.adam_eps;
  train_json["forget_bias_init"] = config.train.forget_bias_init;
  train_json["weight_init_scale"] = config.train.weight_init_scale;
  train_json["train_fraction"] = config.train.train_fraction;
  train_json["optimizer"] = config.train.optimizer;
  train_json["seed"] = config.train.seed;
  doc["train"] = std::move(train_json);
  Json surrogate_json;
  surrogate_json["nonzero_threshold"] = config.surrogate.nonzero_threshold;
  surrogate_json["direction_mode"] = config.surrogate.direction_mode;
  doc["surrogate"] = std::move(surrogate_json);
  Json seg_json;
  seg_json["depth"] = config.segmentation.depth;
  seg_json["kmeans_restarts"] = config.segmentation.kmeans_restarts;
  seg_json["null_permutations"] = config.segmentation.null_permutations;
  seg_json["course_change_threshold"] = config.segmentation.course_change_threshold;
  seg_json["coarse_window"] = config.resolved_coarse_window();
  seg_json["fine_window"] = config.segmentation.fine_window;
  doc["segmentation"] = std::move(seg_json);
  return doc;
}

Json run_pipeline(const RunConfig& config, const std::string& out_dir, std::ostream* log) {
  const auto t_start = std::chrono::steady_clock::now();
  config.synth.validate();
  config.train.validate();
  const auto direction_mode = parse_direction_mode(config.surrogate.direction_mode);
  fs::create_directories(out_dir);
  const auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  Json timing;

  // --- synth + score ------------------------------------------------------
  auto t_stage = std::chrono::steady_clock::now();
  const synth::Dataset dataset = synth::generate_population(config.synth);
  artifacts::write_dataset_json(path("dataset.json"), dataset);
  artifacts::write_coefficients_csv(path("coefficients.csv"), dataset.coefficients);
  {
    std::vector<artifacts::TraitRow> rows;
    rows.reserve(dataset.customers.size());
    for (const auto& c : dataset.customers)
      rows.push_back({c.customer_id, c.label, c.label_order});
    artifacts::write_traits_csv(path("traits.csv"), rows);
  }
  {
    // Per-period pseudo-transactions; aggregate_transactions with window 1
    // reproduces the per-period profiles.
    std::vector<synth::RawTransaction> rows;
    rows.reserve(dataset.customers.size() * dataset.periods() * dataset.k());
    for (const auto& c : dataset.customers)
      for (const auto& p : c.profiles)
        for (std::size_t cls = 0; cls < dataset.k(); ++cls) {
          if (p.shares()[cls] <= 0.0) continue;
          rows.push_back({c.customer_id, p.period_index(), cls, p.shares()[cls]});
        }
    artifacts::write_transactions_csv(path("transactions.csv"), rows);
  }
  timing["synth_seconds"] = elapsed_seconds(t_stage);
  log_stage(log, "synth", timing["synth_seconds"].get<double>());

  // --- train ----------------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  const rnn::TrainResult trained = rnn::train(dataset, config.train);
  artifacts::ModelArtifact model_artifact;
  model_artifact.model = trained.model;
  model_artifact.config = config.train;
  model_artifact.report = trained.report;
  for (std::size_t idx : trained.report.train_indices)
    model_artifact.train_customer_ids.push_back(dataset.customers[idx].customer_id);
  for (std::size_t idx : trained.report.validation_indices)
    model_artifact.validation_customer_ids.push_back(dataset.customers[idx].customer_id);
  artifacts::write_model_json(path("model.json"), model_artifact);
  timing["train_seconds"] = elapsed_seconds(t_stage);
  log_stage(log, "train", timing["train_seconds"].get<double>());

  // --- extract ----------------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  const auto trajectories = rnn::extract_trajectories(trained.model, dataset, 1);
  artifacts::write_trajectories_csv(path("trajectories.csv"), trajectories);
  timing["extract_seconds"] = elapsed_seconds(t_stage);
  log_stage(log, "extract", timing["extract_seconds"].get<double>());

  // --- explain ----------------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  std::vector<std::size_t> angle_index;  // customer index per angle row
  std::vector<surrogate::DirectionAngles> all_angles;
  std::size_t n_degenerate_trajectories = 0;
  for (std::size_t i = 0; i < dataset.customers.size(); ++i) {
    try {
      all_angles.push_back(surrogate::trajectory_angles(trajectories[i], direction_mode));
      angle_index.push_back(i);
    } catch (const DegenerateTrajectoryError&) {
      ++n_degenerate_trajectories;
    }
  }
  if (all_angles.size() < 4)
    throw DegenerateTrajectoryError("pipeline: nearly all trajectories are degenerate");
  {
    std::vector<artifacts::AngleRow> rows;
    rows.reserve(all_angles.size());
    for (std::size_t a = 0; a < all_angles.size(); ++a) {
      const auto& c = dataset.customers[angle_index[a]];
      rows.push_back({c.customer_id, all_angles[a], c.label_order});
    }
    artifacts::write_angles_csv(path("angles.csv"), rows);
  }

  const std::set<std::size_t> validation_set(trained.report.validation_indices.begin(),
                                             trained.report.validation_indices.end());
  Matrix x_train(0, 0), x_test(0, 0);
  std::vector<surrogate::DirectionAngles> y_train, y_test;
  {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t a = 0; a < all_angles.size(); ++a) {
      if (validation_set.count(angle_index[a]) > 0)
        test_rows.push_back(a);
      else
        train_rows.push_back(a);
    }
    if (train_rows.empty() || test_rows.size() < 2)
      throw EmptyDatasetError("pipeline: surrogate split has too few rows");
    x_train = Matrix(train_rows.size(), dataset.k());
    x_test = Matrix(test_rows.size(), dataset.k());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      const auto mean = dataset.customers[angle_index[train_rows[r]]].mean_shares();
      for (std::size_t j = 0; j < dataset.k(); ++j) x_train(r, j) = mean[j];
      y_train.push_back(all_angles[train_rows[r]]);
    }
    for (std::size_t r = 0; r < test_rows.size(); ++r) {
      const auto mean = dataset.customers[angle_index[test_rows[r]]].mean_shares();
      for (std::size_t j = 0; j < dataset.k(); ++j) x_test(r, j) = mean[j];
      y_test.push_back(all_angles[test_rows[r]]);
    }
  }

  const auto linear = surrogate::fit_linear(x_train, y_train);
  const double linear_r2_test = surrogate::evaluate_r2(linear, x_test, y_test);
  const auto linear_r2_per_angle = surrogate::evaluate_r2_per_angle(linear, x_test, y_test);
  artifacts::write_surrogate_json(path("surrogate.json"), linear, linear_r2_test,
                                  linear_r2_per_angle);

  const auto poly = surrogate::fit_polynomial_baseline(x_train, y_train);
  const double poly_r2_test = surrogate::evaluate_r2(poly, x_test, y_test);

  auto fidelity = surrogate::evaluate_fidelity(linear, dataset.coefficients, x_test, y_test,
                                               config.surrogate.nonzero_threshold);
  fidelity.r2_polynomial_test = poly_r2_test;
  artifacts::write_fidelity_json(path("fidelity.json"), fidelity);
  timing["explain_seconds"] = elapsed_seconds(t_stage);
  log_stage(log, "explain", timing["explain_seconds"].get<double>());

  // --- cluster ----------------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  std::vector<domain::DominantOrder> angle_orders;
  angle_orders.reserve(all_angles.size());
  for (std::size_t a = 0; a < all_angles.size(); ++a)
    angle_orders.push_back(dataset.customers[angle_index[a]].label_order);

  segmentation::PurityOptions purity_opts;
  purity_opts.seed = rng::derive(config.seed, rng::StreamId::kmeans);
  purity_opts.restarts = config.segmentation.kmeans_restarts;
  purity_opts.null_permutations = config.segmentation.null_permutations;
  const auto tree = segmentation::build_hierarchy(all_angles, angle_orders,
                                                  config.segmentation.depth, &purity_opts);
  artifacts::write_hierarchy_json(path("hierarchy.json"), tree);

  std::vector<int> dominant_labels;
  dominant_labels.reserve(all_angles.size());
  for (const auto& order : angle_orders) dominant_labels.push_back(order.dominant());
  const double depth1_purity = segmentation::geometric_purity(
      all_angles, dominant_labels, domain::kNumTraits,
      rng::derive(config.seed, rng::StreamId::kmeans), config.segmentation.kmeans_restarts);
  double depth1_null = 0.0;
  {
    const double rho = surrogate::azimuth_rotation(all_angles);
    Matrix pts(all_angles.size(), 2);
    for (std::size_t i = 0; i < all_angles.size(); ++i) {
      pts(i, 0) = surrogate::wrap_angle(all_angles[i].theta - rho);
      pts(i, 1) = all_angles[i].phi;
    }
    const auto km = segmentation::kmeans(pts, domain::kNumTraits,
                                         config.segmentation.kmeans_restarts,
                                         rng::derive(config.seed, rng::StreamId::kmeans));
    depth1_null = segmentation::permutation_null_purity(
        km.assignment, domain::kNumTraits, dominant_labels,
        config.segmentation.null_permutations,
        rng::derive(config.seed, rng::StreamId::null_permutation));
  }
  timing["cluster_seconds"] = elapsed_seconds(t_stage);
  log_stage(log, "cluster", timing["cluster_seconds"].get<double>());

  // --- stability ----------------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  const auto stability = segmentation::stability_check(
      trained.model, dataset, config.resolved_coarse_window(), config.segmentation.fine_window);
  artifacts::write_stability_csv(path("stability.csv"), stability);
  timing["stability_seconds"] = elapsed_seconds(t_stage);
  log_stage(log, "stability", timing["stability_seconds"].get<double>());

  // --- course changes ----------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  std::size_t n_switched = 0, n_detectable = 0, n_within_1 = 0;
  for (std::size_t i = 0; i < dataset.customers.size(); ++i) {
    const auto& c = dataset.customers[i];
    if (!c.regime_switch) continue;
    ++n_switched;
    if (trajectories[i].points.size() < 3) continue;
    ++n_detectable;
    const auto change = segmentation::detect_course_change(
        trajectories[i], config.segmentation.course_change_threshold);
    if (change && std::abs(change->period - c.switch_period) <= 1) ++n_within_1;
  }
  timing["course_change_seconds"] = elapsed_seconds(t_stage);

  // --- report ----------------------------------------------------------------
  Json report;
  report["seed"] = config.seed;
  report["config"] = run_config_to_json(config);

  Json dataset_json;
  dataset_json["n_customers"] = dataset.customers.size();
  dataset_json["k_classes"] = dataset.k();
  dataset_json["n_periods"] = dataset.periods();
  dataset_json["n_switched"] = dataset.n_switched();
  dataset_json["coefficient_nonzero_rows"] =
      dataset.coefficients.nonzero_row_count(config.surrogate.nonzero_threshold);
  dataset_json["n_degenerate_trajectories"] = n_degenerate_trajectories;
  report["dataset"] = std::move(dataset_json);

  Json training_json;
  training_json["epochs_run"] = trained.report.epochs.size();
  training_json["initial_validation_mse"] = trained.report.initial_validation_mse;
  training_json["final_train_mse"] = trained.report.final_train_mse;
  training_json["final_validation_mse"] = trained.report.final_validation_mse;
  training_json["validation_label_variance"] = trained.report.validation_label_variance;
  Json r2_per_trait = Json::array();
  for (double v : trained.report.validation_r2) r2_per_trait.push_back(v);
  training_json["validation_r2_per_trait"] = std::move(r2_per_trait);
  report["training"] = std::move(training_json);

  Json surrogate_json;
  surrogate_json["r2_train"] = linear.r2_train;
  surrogate_json["r2_test"] = linear_r2_test;
  surrogate_json["r2_test_per_angle"] = Json::array({linear_r2_per_angle[0], linear_r2_per_angle[1]});
  surrogate_json["r2_polynomial_train"] = poly.r2_train;
  surrogate_json["r2_polynomial_test"] = poly_r2_test;
  surrogate_json["nonzero_count"] = fidelity.nonzero_count;
  surrogate_json["jointly_nonzero_rows"] = fidelity.jointly_nonzero_rows;
  surrogate_json["azimuth_rotation"] = linear.azimuth_offset;
  surrogate_json["solver_rank"] = linear.solver_rank;
  surrogate_json["polynomial_solver_rank"] = poly.solver_rank;
  report["surrogate"] = std::move(surrogate_json);

  Json correlations;
  Json table = Json::array();
  std::array<double, 2> max_abs{0.0, 0.0};
  for (std::size_t t = 0; t < domain::kNumTraits; ++t) {
    Json row = Json::array();
    for (std::size_t a = 0; a < 2; ++a) {
      const double r = fidelity.coefficient_correlations(t, a);
      row.push_back(r);
      if (std::isfinite(r)) max_abs[a] = std::max(max_abs[a], std::abs(r));
    }
    table.push_back(std::move(row));
  }
  correlations["table"] = std::move(table);
  correlations["max_abs_per_angle"] = Json::array({max_abs[0], max_abs[1]});
  report["correlations"] = std::move(correlations);

  Json segmentation_json;
  segmentation_json["depth"] = config.segmentation.depth;
  segmentation_json["depth1_purity"] = depth1_purity;
  segmentation_json["depth1_null_purity"] = depth1_null;
  Json levels = Json::array();
  for (std::size_t d = 1; d + 1 <= config.segmentation.depth && d <= 3; ++d) {
    Json level;
    level["substructure_depth"] = d + 1;  // structure measured inside depth-d nodes
    Json nodes = Json::array();
    for (const auto* node : tree.level(d)) {
      Json nj;
      nj["key"] = node->key_initials();
      nj["member_count"] = node->members.size();
      nj["purity"] = node->purity;
      nj["null_purity"] = node->null_purity;
      nj["n_child_labels"] = node->n_child_labels;
      const bool has = std::isfinite(node->purity) && std::isfinite(node->null_purity);
      nj["purity_excess"] =
          has ? node->purity - node->null_purity : std::numeric_limits<double>::quiet_NaN();
      nodes.push_back(std::move(nj));
    }
    level["nodes"] = std::move(nodes);
    levels.push_back(std::move(level));
  }
  segmentation_json["hierarchy"] = std::move(levels);
  report["segmentation"] = std::move(segmentation_json);

  Json stability_json;
  stability_json["coarse_window"] = stability.coarse_window;
  stability_json["fine_window"] = stability.fine_window;
  stability_json["agreement_rate"] = stability.agreement_rate;
  stability_json["agreement_rate_stationary"] = stability.agreement_rate_stationary;
  stability_json["mean_divergence_rad"] = stability.mean_divergence_rad;
  stability_json["n_degenerate"] = stability.n_degenerate;
  report["stability"] = std::move(stability_json);

  Json course_json;
  course_json["threshold_rad"] = config.segmentation.course_change_threshold;
  course_json["n_switched"] = n_switched;
  course_json["n_detectable"] = n_detectable;
  course_json["n_detected_within_1"] = n_within_1;
  course_json["within_1_rate"] =
      n_detectable > 0 ? static_cast<double>(n_within_1) / static_cast<double>(n_detectable)
                       : std::numeric_limits<double>::quiet_NaN();
  report["course_change"] = std::move(course_json);

  // Report-level acceptance thresholds, evaluated by `run --check`.
  Json checks;
  checks["validation_mse_below_label_variance"] =
      trained.report.final_validation_mse < trained.report.validation_label_variance;
  checks["surrogate_r2_test_at_least_0_70"] = linear_r2_test >= 0.70;
  checks["polynomial_gain_below_0_05"] = (poly_r2_test - linear_r2_test) < 0.05;
  checks["depth1_purity_at_least_0_80"] = depth1_purity >= 0.8;
  checks["depth1_purity_exceeds_null_by_0_40"] = depth1_purity - depth1_null >= 0.4;
  {
    bool ok = true;
    for (const auto* node : tree.level(1)) {
      if (node->members.size() < 100) continue;
      if (!std::isfinite(node->purity) || !std::isfinite(node->null_purity) ||
          node->purity - node->null_purity < 0.1) {
        ok = false;
        break;
      }
    }
    checks["depth2_purity_excess_at_least_0_10"] = ok;
  }
  checks["stability_stationary_at_least_0_90"] = stability.agreement_rate_stationary >= 0.9;
  checks["course_change_within_1_at_least_0_70"] =
      n_detectable == 0 ||
      static_cast<double>(n_within_1) / static_cast<double>(n_detectable) >= 0.7;
  checks["correlation_max_abs_at_least_0_50_per_angle"] =
      max_abs[0] >= 0.5 && max_abs[1] >= 0.5;
  report["checks"] = std::move(checks);

  jsonio::write_file(path("report.json"), jsonio::dump(report));

  // --- plot data ---------------------------------------------------------------
  t_stage = std::chrono::steady_clock::now();
  emit_plot_data(out_dir, config.seed);
  timing["plot_data_seconds"] = elapsed_seconds(t_stage);
  timing["total_seconds"] = elapsed_seconds(t_start);
  jsonio::write_file(path("timing.json"), jsonio::dump(timing));
  log_stage(log, "run", timing["total_seconds"].get<double>());
  return report;
}

CheckOutcome evaluate_report_checks(const Json& report) {
  CheckOutcome outcome;
  if (!report.contains("checks")) {
    outcome.all_passed = false;
    outcome.failures = "report has no checks block";
    return outcome;
  }
  for (const auto& [name, value] : report.at("checks").items()) {
    if (!value.is_boolean() || !value.get<bool>()) {
      outcome.all_passed = false;
      outcome.failures += name + "\n";
    }
  }
  return outcome;
}

void emit_plot_data(const std::string& artifact_dir, std::uint64_t seed) {
  const auto path = [&](const std::string& name) {
    return (fs::path(artifact_dir) / name).string();
  };
  for (const char* required : {"dataset.json", "model.json", "trajectories.csv", "traits.csv",
                               "angles.csv"})
    if (!fs::exists(fs::path(artifact_dir) / required))
      throw StageOrderError(std::string("emit_plot_data: missing artifact ") + required +
                            "; run the pipeline stages first");

  const auto trajectories = artifacts::read_trajectories_csv(path("trajectories.csv"));
  const auto traits = artifacts::read_traits_csv(path("traits.csv"));
  std::map<std::string, const artifacts::TraitRow*> traits_by_id;
  for (const auto& row : traits) traits_by_id[row.customer_id] = &row;

  // fig1: sampled trajectories with the dominant-trait label.
  {
    std::vector<std::size_t> indices(trajectories.size());
    std::iota(indices.begin(), indices.end(), 0);
    rng::Stream stream(rng::derive(seed, rng::StreamId::plot_sample));
    stream.shuffle(indices);
    const std::size_t n_sample = std::min<std::size_t>(50, indices.size());
    indices.resize(n_sample);
    std::sort(indices.begin(), indices.end());

    std::string out = "customer_id,step,h1,h2,h3,dominant_trait\n";
    for (std::size_t idx : indices) {
      const auto& traj = trajectories[idx];
      const auto it = traits_by_id.find(traj.customer_id);
      if (it == traits_by_id.end())
        throw SchemaError("emit_plot_data: no traits row for " + traj.customer_id);
      const char label =
          domain::kTraitInitials[static_cast<std::size_t>(it->second->order.dominant())];
      for (std::size_t t = 0; t < traj.points.size(); ++t) {
        out += traj.customer_id + "," + std::to_string(t);
        for (double h : traj.points[t]) out += "," + jsonio::format_double(h);
        out.push_back(',');
        out.push_back(label);
        out.push_back('\n');
      }
    }
    jsonio::write_file(path("fig1_trajectories.csv"), out);
  }

  // fig2: angle scatter with the order prefix at every hierarchy depth.
  {
    const auto angle_rows = artifacts::read_angles_csv(path("angles.csv"));
    std::string out = "customer_id,theta,phi,depth1,depth2,depth3,depth4\n";
    for (const auto& row : angle_rows) {
      out += row.customer_id + "," + jsonio::format_double(row.angles.theta) + "," +
             jsonio::format_double(row.angles.phi);
      std::string prefix;
      for (std::size_t d = 0; d < 4; ++d) {
        if (d > 0) prefix.push_back('>');
        prefix.push_back(
            domain::kTraitInitials[static_cast<std::size_t>(row.order.at_rank(d))]);
        out += "," + prefix;
      }
      out += "\n";
    }
    jsonio::write_file(path("fig2_angles.csv"), out);
  }

  // fig3: coarse vs fine trajectory for one regime-switch customer.
  {
    const auto dataset = artifacts::read_dataset_json(path("dataset.json"));
    const auto model = artifacts::read_model_json(path("model.json")).model;
    const synth::CustomerRecord* chosen = nullptr;
    for (const auto& c : dataset.customers) {
      if (c.regime_switch) {
        chosen = &c;
        break;
      }
    }
    if (chosen == nullptr) chosen = &dataset.customers.front();

    std::string out = "customer_id,window,step,h1,h2,h3\n";
    const std::size_t coarse_w = dataset.periods();
    for (const auto& [name, window] :
         std::vector<std::pair<std::string, std::size_t>>{{"coarse", coarse_w}, {"fine", 1}}) {
      const auto cache = rnn::forward(model, chosen->windowed_inputs(window));
      const auto traj = rnn::trajectory_from_cache(cache, chosen->customer_id);
      for (std::size_t t = 0; t < traj.points.size(); ++t) {
        out += traj.customer_id + "," + name + "," + std::to_string(t);
        for (double h : traj.points[t]) out += "," + jsonio::format_double(h);
        out += "\n";
      }
    }
    jsonio::write_file(path("fig3_pair.csv"), out);
  }
}

namespace {

synth::SynthConfig parse_synth_config(const Json& doc, const std::string& context) {
  synth::SynthConfig c;
  try {
    if (doc.contains("n_customers")) c.n_customers = doc.at("n_customers").get<std::size_t>();
    if (doc.contains("n_periods")) c.n_periods = doc.at("n_periods").get<std::size_t>();
    if (doc.contains("k_classes")) c.k_classes = doc.at("k_classes").get<std::size_t>();
    if (doc.contains("n_nonzero_rows"))
      c.n_nonzero_rows = doc.at("n_nonzero_rows").get<std::size_t>();
    if (doc.contains("trait_signal_strength"))
      c.trait_signal_strength = doc.at("trait_signal_strength").get<double>();
    if (doc.contains("noise_scale")) c.noise_scale = doc.at("noise_scale").get<double>();
    if (doc.contains("regime_switch_fraction"))
      c.regime_switch_fraction = doc.at("regime_switch_fraction").get<double>();
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(context + ": " + e.what());
  }
  return c;
}

rnn::TrainConfig parse_train_config(const Json& doc, const std::string& context) {
  rnn::TrainConfig c;
  try {
    if (doc.contains("learning_rate")) c.learning_rate = doc.at("learning_rate").get<double>();
    if (doc.contains("epochs")) c.epochs = doc.at("epochs").get<std::size_t>();
    if (doc.contains("batch_size")) c.batch_size = doc.at("batch_size").get<std::size_t>();
    if (doc.contains("adam_beta1")) c.adam_beta1 = doc.at("adam_beta1").get<double>();
    if (doc.contains("adam_beta2")) c.adam_beta2 = doc.at("adam_beta2").get<double>();
    if (doc.contains("adam_eps")) c.adam_eps = doc.at("adam_eps").get<double>();
    if (doc.contains("forget_bias_init"))
      c.forget_bias_init = doc.at("forget_bias_init").get<double>();
    if (doc.contains("weight_init_scale"))
      c.weight_init_scale = doc.at("weight_init_scale").get<double>();
    if (doc.contains("train_fraction")) c.train_fraction = doc.at("train_fraction").get<double>();
    if (doc.contains("optimizer")) c.optimizer = doc.at("optimizer").get<std::string>();
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(context + ": " + e.what());
  }
  return c;
}

}  // namespace

void cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed,
               const std::string& out_dir) {
  synth::SynthConfig config;
  if (!config_path.empty()) config = parse_synth_config(jsonio::parse_file(config_path), config_path);
  if (seed) config.seed = *seed;
  const auto dataset = synth::generate_population(config);
  fs::create_directories(out_dir);
  const auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  artifacts::write_dataset_json(path("dataset.json"), dataset);
  artifacts::write_coefficients_csv(path("coefficients.csv"), dataset.coefficients);
  std::vector<artifacts::TraitRow> rows;
  rows.reserve(dataset.customers.size());
  for (const auto& c : dataset.customers) rows.push_back({c.customer_id, c.label, c.label_order});
  artifacts::write_traits_csv(path("traits.csv"), rows);
}

void cmd_score(const std::string& transactions_csv, const std::string& coefficients_csv,
               std::size_t window, const std::string& out_dir) {
  const auto coeffs = artifacts::read_coefficients_csv(coefficients_csv);
  const auto rows = artifacts::read_transactions_csv(transactions_csv);
  const auto profiles = synth::aggregate_transactions(rows, window, coeffs.k());

  // Mean profile per customer across windows, then population scaling.
  std::vector<std::string> ids;
  std::vector<std::vector<double>> sums;
  std::vector<std::size_t> counts;
  for (const auto& p : profiles) {
    if (ids.empty() || ids.back() != p.customer_id()) {
      ids.push_back(p.customer_id());
      sums.emplace_back(p.k(), 0.0);
      counts.push_back(0);
    }
    auto& acc = sums.back();
    for (std::size_t c = 0; c < p.k(); ++c) acc[c] += p.shares()[c];
    ++counts.back();
  }
  Matrix raw(ids.size(), domain::kNumTraits);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (double& v : sums[i]) v /= static_cast<double>(counts[i]);
    const auto scores =
        domain::score_traits(domain::SpendingProfile(ids[i], 0, sums[i]), coeffs);
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) raw(i, t) = scores[t];
  }
  auto [scaled, bounds] = domain::scale_population(raw);
  (void)bounds;
  std::vector<artifacts::TraitRow> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.push_back({ids[i], scaled[i], domain::dominant_order(scaled[i])});
  fs::create_directories(out_dir);
  artifacts::write_traits_csv((fs::path(out_dir) / "traits.csv").string(), out);
}

void cmd_train(const std::string& data_dir, const std::string& config_path,
               std::optional<std::uint64_t> seed, const std::string& model_out) {
  const auto dataset = artifacts::read_dataset_json((fs::path(data_dir) / "dataset.json").string());
  rnn::TrainConfig config;
  if (!config_path.empty()) config = parse_train_config(jsonio::parse_file(config_path), config_path);
  if (seed) config.seed = *seed;
  const auto trained = rnn::train(dataset, config);
  artifacts::ModelArtifact artifact;
  artifact.model = trained.model;
  artifact.config = config;
  artifact.report = trained.report;
  for (std::size_t idx : trained.report.train_indices)
    artifact.train_customer_ids.push_back(dataset.customers[idx].customer_id);
  for (std::size_t idx : trained.report.validation_indices)
    artifact.validation_customer_ids.push_back(dataset.customers[idx].customer_id);
  artifacts::write_model_json(model_out, artifact);
}

void cmd_extract(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_csv, std::size_t window) {
  const auto model = artifacts::read_model_json(model_path).model;
  const auto dataset = artifacts::read_dataset_json((fs::path(data_dir) / "dataset.json").string());
  artifacts::write_trajectories_csv(out_csv, rnn::extract_trajectories(model, dataset, window));
}

void cmd_explain(const std::string& model_path, const std::string& data_dir,
                 const std::string& out_dir, double nonzero_threshold,
                 const std::string& direction_mode) {
  const auto mode = parse_direction_mode(direction_mode);
  const auto artifact = artifacts::read_model_json(model_path);
  const auto dataset = artifacts::read_dataset_json((fs::path(data_dir) / "dataset.json").string());
  const auto trajectories = rnn::extract_trajectories(artifact.model, dataset, 1);

  std::vector<surrogate::DirectionAngles> angles;
  std::vector<std::size_t> angle_index;
  for (std::size_t i = 0; i < dataset.customers.size(); ++i) {
    try {
      angles.push_back(surrogate::trajectory_angles(trajectories[i], mode));
      angle_index.push_back(i);
    } catch (const DegenerateTrajectoryError&) {
    }
  }
  if (angles.size() < 4) throw DegenerateTrajectoryError("explain: too few usable trajectories");

  fs::create_directories(out_dir);
  const auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  {
    std::vector<artifacts::AngleRow> rows;
    for (std::size_t a = 0; a < angles.size(); ++a) {
      const auto& c = dataset.customers[angle_index[a]];
      rows.push_back({c.customer_id, angles[a], c.label_order});
    }
    artifacts::write_angles_csv(path("angles.csv"), rows);
  }

  const std::set<std::string> validation_ids(artifact.validation_customer_ids.begin(),
                                             artifact.validation_customer_ids.end());
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t a = 0; a < angles.size(); ++a) {
    const auto& id = dataset.customers[angle_index[a]].customer_id;
    (validation_ids.count(id) > 0 ? test_rows : train_rows).push_back(a);
  }
  if (train_rows.empty() || test_rows.size() < 2)
    throw EmptyDatasetError("explain: surrogate split has too few rows");

  const auto fill = [&](const std::vector<std::size_t>& rows, Matrix& x,
                        std::vector<surrogate::DirectionAngles>& y) {
    x = Matrix(rows.size(), dataset.k());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto mean = dataset.customers[angle_index[rows[r]]].mean_shares();
      for (std::size_t j = 0; j < dataset.k(); ++j) x(r, j) = mean[j];
      y.push_back(angles[rows[r]]);
    }
  };
  Matrix x_train, x_test;
  std::vector<surrogate::DirectionAngles> y_train, y_test;
  fill(train_rows, x_train, y_train);
  fill(test_rows, x_test, y_test);

  const auto linear = surrogate::fit_linear(x_train, y_train);
  const double r2_test = surrogate::evaluate_r2(linear, x_test, y_test);
  const auto r2_per_angle = surrogate::evaluate_r2_per_angle(linear, x_test, y_test);
  artifacts::write_surrogate_json(path("surrogate.json"), linear, r2_test, r2_per_angle);

  const auto poly = surrogate::fit_polynomial_baseline(x_train, y_train);
  auto fidelity =
      surrogate::evaluate_fidelity(linear, dataset.coefficients, x_test, y_test, nonzero_threshold);
  fidelity.r2_polynomial_test = surrogate::evaluate_r2(poly, x_test, y_test);
  artifacts::write_fidelity_json(path("fidelity.json"), fidelity);
}

void cmd_cluster(const std::string& angles_csv, const std::string& traits_csv, std::size_t depth,
                 const std::string& out_json, std::uint64_t seed) {
  const auto angle_rows = artifacts::read_angles_csv(angles_csv);
  const auto trait_rows = artifacts::read_traits_csv(traits_csv);
  std::map<std::string, const artifacts::TraitRow*> by_id;
  for (const auto& row : trait_rows) by_id[row.customer_id] = &row;

  std::vector<surrogate::DirectionAngles> angles;
  std::vector<domain::DominantOrder> orders;
  for (const auto& row : angle_rows) {
    const auto it = by_id.find(row.customer_id);
    if (it == by_id.end())
      throw SchemaError("cluster: no traits row for customer " + row.customer_id);
    angles.push_back(row.angles);
    orders.push_back(it->second->order);
  }
  segmentation::PurityOptions opts;
  opts.seed = rng::derive(seed, rng::StreamId::kmeans);
  const auto tree = segmentation::build_hierarchy(angles, orders, depth, &opts);
  artifacts::write_hierarchy_json(out_json, tree);
}

void cmd_stability(const std::string& model_path, const std::string& data_dir, std::size_t coarse,
                   std::size_t fine, const std::string& out_csv) {
  const auto model = artifacts::read_model_json(model_path).model;
  const auto dataset = artifacts::read_dataset_json((fs::path(data_dir) / "dataset.json").string());
  artifacts::write_stability_csv(out_csv, segmentation::stability_check(model, dataset, coarse, fine));
}

}  // namespace microseg::pipeline
