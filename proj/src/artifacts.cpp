#include "microseg/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "microseg/errors.hpp"

namespace microseg::artifacts {
namespace {

using jsonio::format_double;
using jsonio::Json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& expected_header) {
  const std::string text = jsonio::read_file(path);
  std::istringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw SchemaError(path + ": empty file");
  while (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header)
    throw SchemaError(path + ": expected header '" + expected_header + "', got '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(context + ": invalid number '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(context + ": invalid integer '" + s + "'");
  }
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& rows, std::size_t expected_cols, const std::string& context) {
  if (!rows.is_array() || rows.empty()) throw SchemaError(context + ": expected a non-empty array");
  Matrix m(rows.size(), expected_cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != expected_cols)
      throw SchemaError(context + ": row " + std::to_string(i) + " has wrong width");
    for (std::size_t j = 0; j < expected_cols; ++j) {
      m(i, j) = row[j].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                 : row[j].get<double>();
    }
  }
  return m;
}

Json shaped_block(const double* data, std::size_t rows, std::size_t cols) {
  Json block;
  block["shape"] = Json::array({rows, cols});
  Json values = Json::array();
  for (std::size_t i = 0; i < rows * cols; ++i) values.push_back(data[i]);
  block["data"] = std::move(values);
  return block;
}

void load_shaped_block(const Json& block, double* dest, std::size_t rows, std::size_t cols,
                       const std::string& name) {
  if (!block.contains("shape") || !block.contains("data"))
    throw SchemaError("model.json: block '" + name + "' missing shape/data");
  const auto& shape = block["shape"];
  if (shape.size() != 2 || shape[0].get<std::size_t>() != rows ||
      shape[1].get<std::size_t>() != cols)
    throw SchemaError("model.json: block '" + name + "' has unexpected shape");
  const auto& data = block["data"];
  if (data.size() != rows * cols)
    throw SchemaError("model.json: block '" + name + "' has wrong data length");
  for (std::size_t i = 0; i < rows * cols; ++i) dest[i] = data[i].get<double>();
}

}  // namespace

void write_coefficients_csv(const std::string& path, const domain::CoefficientMatrix& coeffs) {
  std::string out =
      "class_id,class_name,openness,conscientiousness,extraversion,agreeableness,neuroticism\n";
  for (std::size_t i = 0; i < coeffs.k(); ++i) {
    out += std::to_string(i) + "," + coeffs.class_names[i];
    for (std::size_t t = 0; t < domain::kNumTraits; ++t)
      out += "," + format_double(coeffs.values(i, t));
    out += "\n";
  }
  jsonio::write_file(path, out);
}

domain::CoefficientMatrix read_coefficients_csv(const std::string& path) {
  const auto rows = read_csv(
      path, "class_id,class_name,openness,conscientiousness,extraversion,agreeableness,neuroticism");
  if (rows.empty()) throw SchemaError(path + ": no coefficient rows");
  domain::CoefficientMatrix out;
  out.values = Matrix(rows.size(), domain::kNumTraits);
  out.class_names.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 7) throw SchemaError(path + ": row " + std::to_string(i) + " malformed");
    out.class_names[i] = rows[i][1];
    for (std::size_t t = 0; t < domain::kNumTraits; ++t)
      out.values(i, t) = parse_double(rows[i][2 + t], path);
  }
  out.validate();
  return out;
}

void write_traits_csv(const std::string& path, const std::vector<TraitRow>& rows) {
  std::string out =
      "customer_id,openness,conscientiousness,extraversion,agreeableness,neuroticism,dominant_order\n";
  for (const auto& r : rows) {
    out += r.customer_id;
    for (double g : r.traits.grades) out += "," + format_double(g);
    out += "," + r.order.initials() + "\n";
  }
  jsonio::write_file(path, out);
}

std::vector<TraitRow> read_traits_csv(const std::string& path) {
  const auto rows = read_csv(
      path,
      "customer_id,openness,conscientiousness,extraversion,agreeableness,neuroticism,dominant_order");
  std::vector<TraitRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != 7) throw SchemaError(path + ": malformed trait row");
    TraitRow row;
    row.customer_id = r[0];
    for (std::size_t t = 0; t < domain::kNumTraits; ++t)
      row.traits.grades[t] = parse_double(r[1 + t], path);
    row.order = domain::DominantOrder::parse_initials(r[6]);
    out.push_back(std::move(row));
  }
  return out;
}

void write_transactions_csv(const std::string& path,
                            const std::vector<synth::RawTransaction>& rows) {
  std::string out = "customer_id,bucket,class_id,amount\n";
  for (const auto& r : rows) {
    out += r.customer_id + "," + std::to_string(r.bucket) + "," + std::to_string(r.class_id) +
           "," + format_double(r.amount) + "\n";
  }
  jsonio::write_file(path, out);
}

std::vector<synth::RawTransaction> read_transactions_csv(const std::string& path) {
  const auto rows = read_csv(path, "customer_id,bucket,class_id,amount");
  std::vector<synth::RawTransaction> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != 4) throw SchemaError(path + ": malformed transaction row");
    synth::RawTransaction tx;
    tx.customer_id = r[0];
    tx.bucket = parse_long(r[1], path);
    const long cls = parse_long(r[2], path);
    if (cls < 0) throw SchemaError(path + ": negative class_id");
    tx.class_id = static_cast<std::size_t>(cls);
    tx.amount = parse_double(r[3], path);
    out.push_back(std::move(tx));
  }
  return out;
}

void write_trajectories_csv(const std::string& path,
                            const std::vector<rnn::Trajectory>& trajectories) {
  std::string out = "customer_id,step,h1,h2,h3\n";
  for (const auto& traj : trajectories) {
    for (std::size_t t = 0; t < traj.points.size(); ++t) {
      out += traj.customer_id + "," + std::to_string(t);
      for (double h : traj.points[t]) out += "," + format_double(h);
      out += "\n";
    }
  }
  jsonio::write_file(path, out);
}

std::vector<rnn::Trajectory> read_trajectories_csv(const std::string& path) {
  const auto rows = read_csv(path, "customer_id,step,h1,h2,h3");
  std::vector<rnn::Trajectory> out;
  for (const auto& r : rows) {
    if (r.size() != 5) throw SchemaError(path + ": malformed trajectory row");
    if (out.empty() || out.back().customer_id != r[0]) {
      rnn::Trajectory traj;
      traj.customer_id = r[0];
      out.push_back(std::move(traj));
    }
    const long step = parse_long(r[1], path);
    if (step != static_cast<long>(out.back().points.size()))
      throw SchemaError(path + ": steps out of order for " + r[0]);
    std::array<double, rnn::kHidden> point{};
    for (std::size_t j = 0; j < rnn::kHidden; ++j) point[j] = parse_double(r[2 + j], path);
    out.back().points.push_back(point);
  }
  return out;
}

void write_angles_csv(const std::string& path, const std::vector<AngleRow>& rows) {
  std::string out = "customer_id,theta,phi,dominant_order\n";
  for (const auto& r : rows) {
    out += r.customer_id + "," + format_double(r.angles.theta) + "," +
           format_double(r.angles.phi) + "," + r.order.initials() + "\n";
  }
  jsonio::write_file(path, out);
}

std::vector<AngleRow> read_angles_csv(const std::string& path) {
  const auto rows = read_csv(path, "customer_id,theta,phi,dominant_order");
  std::vector<AngleRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != 4) throw SchemaError(path + ": malformed angle row");
    AngleRow row;
    row.customer_id = r[0];
    row.angles.theta = parse_double(r[1], path);
    row.angles.phi = parse_double(r[2], path);
    row.order = domain::DominantOrder::parse_initials(r[3]);
    out.push_back(std::move(row));
  }
  return out;
}

void write_stability_csv(const std::string& path, const segmentation::StabilityReport& report) {
  std::string out = "customer_id,coarse_cluster,fine_cluster,divergence_rad\n";
  for (const auto& rec : report.records) {
    if (rec.degenerate) continue;
    out += rec.customer_id;
    out.push_back(',');
    out.push_back(domain::kTraitInitials[static_cast<std::size_t>(rec.coarse_cluster)]);
    out.push_back(',');
    out.push_back(domain::kTraitInitials[static_cast<std::size_t>(rec.fine_cluster)]);
    out += "," + format_double(rec.divergence_rad) + "\n";
  }
  jsonio::write_file(path, out);
}

void write_dataset_json(const std::string& path, const synth::Dataset& dataset) {
  Json doc;
  Json config;
  config["n_customers"] = dataset.config.n_customers;
  config["n_periods"] = dataset.config.n_periods;
  config["k_classes"] = dataset.config.k_classes;
  config["n_nonzero_rows"] = dataset.config.n_nonzero_rows;
  config["trait_signal_strength"] = dataset.config.trait_signal_strength;
  config["noise_scale"] = dataset.config.noise_scale;
  config["regime_switch_fraction"] = dataset.config.regime_switch_fraction;
  config["seed"] = dataset.config.seed;
  doc["config"] = std::move(config);

  Json scaling;
  scaling["min"] = Json::array();
  scaling["max"] = Json::array();
  for (std::size_t t = 0; t < domain::kNumTraits; ++t) {
    scaling["min"].push_back(dataset.scaling.min[t]);
    scaling["max"].push_back(dataset.scaling.max[t]);
  }
  doc["scaling"] = std::move(scaling);

  Json coeffs;
  coeffs["class_names"] = dataset.coefficients.class_names;
  coeffs["values"] = matrix_to_json(dataset.coefficients.values);
  doc["coefficients"] = std::move(coeffs);

  Json customers = Json::array();
  for (const auto& c : dataset.customers) {
    Json rec;
    rec["customer_id"] = c.customer_id;
    Json label = Json::array();
    for (double g : c.label.grades) label.push_back(g);
    rec["label"] = std::move(label);
    rec["dominant_order"] = c.label_order.initials();
    rec["regime_switch"] = c.regime_switch;
    rec["switch_period"] = c.switch_period;
    rec["intended_dominant"] = c.intended_dominant;
    rec["intended_dominant_post"] = c.intended_dominant_post;
    Json profiles = Json::array();
    for (const auto& p : c.profiles) {
      Json shares = Json::array();
      for (double s : p.shares()) shares.push_back(s);
      profiles.push_back(std::move(shares));
    }
    rec["profiles"] = std::move(profiles);
    Json period_traits = Json::array();
    Json period_orders = Json::array();
    for (std::size_t t = 0; t < c.period_traits.size(); ++t) {
      Json grades = Json::array();
      for (double g : c.period_traits[t].grades) grades.push_back(g);
      period_traits.push_back(std::move(grades));
      period_orders.push_back(c.period_orders[t].initials());
    }
    rec["period_traits"] = std::move(period_traits);
    rec["period_orders"] = std::move(period_orders);
    customers.push_back(std::move(rec));
  }
  doc["customers"] = std::move(customers);
  jsonio::write_file(path, jsonio::dump(doc));
}

synth::Dataset read_dataset_json(const std::string& path) {
  const Json doc = jsonio::parse_file(path);
  synth::Dataset ds;
  try {
    const auto& config = doc.at("config");
    ds.config.n_customers = config.at("n_customers").get<std::size_t>();
    ds.config.n_periods = config.at("n_periods").get<std::size_t>();
    ds.config.k_classes = config.at("k_classes").get<std::size_t>();
    ds.config.n_nonzero_rows = config.at("n_nonzero_rows").get<std::size_t>();
    ds.config.trait_signal_strength = config.at("trait_signal_strength").get<double>();
    ds.config.noise_scale = config.at("noise_scale").get<double>();
    ds.config.regime_switch_fraction = config.at("regime_switch_fraction").get<double>();
    ds.config.seed = config.at("seed").get<std::uint64_t>();

    const auto& scaling = doc.at("scaling");
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) {
      ds.scaling.min[t] = scaling.at("min").at(t).get<double>();
      ds.scaling.max[t] = scaling.at("max").at(t).get<double>();
    }

    const auto& coeffs = doc.at("coefficients");
    ds.coefficients.class_names = coeffs.at("class_names").get<std::vector<std::string>>();
    ds.coefficients.values =
        matrix_from_json(coeffs.at("values"), domain::kNumTraits, path + " coefficients");
    ds.coefficients.validate();

    for (const auto& rec : doc.at("customers")) {
      synth::CustomerRecord c;
      c.customer_id = rec.at("customer_id").get<std::string>();
      for (std::size_t t = 0; t < domain::kNumTraits; ++t)
        c.label.grades[t] = rec.at("label").at(t).get<double>();
      c.label_order = domain::DominantOrder::parse_initials(rec.at("dominant_order").get<std::string>());
      c.regime_switch = rec.at("regime_switch").get<bool>();
      c.switch_period = rec.at("switch_period").get<int>();
      c.intended_dominant = rec.at("intended_dominant").get<int>();
      c.intended_dominant_post = rec.at("intended_dominant_post").get<int>();
      int period = 0;
      for (const auto& shares_json : rec.at("profiles")) {
        std::vector<double> shares = shares_json.get<std::vector<double>>();
        c.profiles.emplace_back(c.customer_id, period++, std::move(shares));
      }
      for (const auto& grades_json : rec.at("period_traits")) {
        domain::TraitVector tv;
        for (std::size_t t = 0; t < domain::kNumTraits; ++t)
          tv.grades[t] = grades_json.at(t).get<double>();
        c.period_traits.push_back(tv);
      }
      for (const auto& order_json : rec.at("period_orders"))
        c.period_orders.push_back(
            domain::DominantOrder::parse_initials(order_json.get<std::string>()));
      ds.customers.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return ds;
}

void write_model_json(const std::string& path, const ModelArtifact& artifact) {
  const auto& m = artifact.model;
  const std::size_t k = m.input_dim;
  Json doc;
  doc["input_dim"] = k;
  doc["hidden_dim"] = rnn::kHidden;
  doc["output_dim"] = rnn::kOutputs;

  Json weights;
  static constexpr std::array<const char*, 4> gate_names = {"input", "forget", "output",
                                                            "candidate"};
  for (int g = 0; g < 4; ++g) {
    const auto gate = static_cast<rnn::Gate>(g);
    weights[std::string("W_") + gate_names[static_cast<std::size_t>(g)]] =
        shaped_block(m.w(gate), rnn::kHidden, k);
    weights[std::string("U_") + gate_names[static_cast<std::size_t>(g)]] =
        shaped_block(m.u(gate), rnn::kHidden, rnn::kHidden);
    weights[std::string("b_") + gate_names[static_cast<std::size_t>(g)]] =
        shaped_block(m.b(gate), 1, rnn::kHidden);
  }
  weights["W_out"] = shaped_block(m.w_out(), rnn::kOutputs, rnn::kHidden);
  weights["b_out"] = shaped_block(m.b_out(), 1, rnn::kOutputs);
  doc["weights"] = std::move(weights);

  Json config;
  config["learning_rate"] = artifact.config.learning_rate;
  config["epochs"] = artifact.config.epochs;
  config["batch_size"] = artifact.config.batch_size;
  config["adam_beta1"] = artifact.config.adam_beta1;
  config["adam_beta2"] = artifact.config.adam_beta2;
  config["adam_eps"] = artifact.config.adam_eps;
  config["forget_bias_init"] = artifact.config.forget_bias_init;
  config["weight_init_scale"] = artifact.config.weight_init_scale;
  config["seed"] = artifact.config.seed;
  config["train_fraction"] = artifact.config.train_fraction;
  config["optimizer"] = artifact.config.optimizer;
  doc["train_config"] = std::move(config);

  Json report;
  report["initial_validation_mse"] = artifact.report.initial_validation_mse;
  report["final_train_mse"] = artifact.report.final_train_mse;
  report["final_validation_mse"] = artifact.report.final_validation_mse;
  report["validation_label_variance"] = artifact.report.validation_label_variance;
  Json r2 = Json::array();
  for (double v : artifact.report.validation_r2) r2.push_back(v);
  report["validation_r2"] = std::move(r2);
  Json epochs = Json::array();
  for (const auto& e : artifact.report.epochs) {
    Json ep;
    ep["train_mse"] = e.train_mse;
    ep["validation_mse"] = e.validation_mse;
    epochs.push_back(std::move(ep));
  }
  report["epochs"] = std::move(epochs);
  doc["training_report"] = std::move(report);
  doc["train_customer_ids"] = artifact.train_customer_ids;
  doc["validation_customer_ids"] = artifact.validation_customer_ids;
  jsonio::write_file(path, jsonio::dump(doc));
}

ModelArtifact read_model_json(const std::string& path) {
  const Json doc = jsonio::parse_file(path);
  ModelArtifact out;
  try {
    const std::size_t k = doc.at("input_dim").get<std::size_t>();
    if (doc.at("hidden_dim").get<std::size_t>() != rnn::kHidden)
      throw SchemaError(path + ": hidden_dim must be 3");
    out.model = rnn::LstmModel::zeros(k);
    const auto& weights = doc.at("weights");
    static constexpr std::array<const char*, 4> gate_names = {"input", "forget", "output",
                                                              "candidate"};
    for (int g = 0; g < 4; ++g) {
      const auto gate = static_cast<rnn::Gate>(g);
      const std::string suffix = gate_names[static_cast<std::size_t>(g)];
      load_shaped_block(weights.at("W_" + suffix), out.model.w(gate), rnn::kHidden, k,
                        "W_" + suffix);
      load_shaped_block(weights.at("U_" + suffix), out.model.u(gate), rnn::kHidden, rnn::kHidden,
                        "U_" + suffix);
      load_shaped_block(weights.at("b_" + suffix), out.model.b(gate), 1, rnn::kHidden,
                        "b_" + suffix);
    }
    load_shaped_block(weights.at("W_out"), out.model.w_out(), rnn::kOutputs, rnn::kHidden, "W_out");
    load_shaped_block(weights.at("b_out"), out.model.b_out(), 1, rnn::kOutputs, "b_out");
    out.model.validate();

    const auto& config = doc.at("train_config");
    out.config.learning_rate = config.at("learning_rate").get<double>();
    out.config.epochs = config.at("epochs").get<std::size_t>();
    out.config.batch_size = config.at("batch_size").get<std::size_t>();
    out.config.adam_beta1 = config.at("adam_beta1").get<double>();
    out.config.adam_beta2 = config.at("adam_beta2").get<double>();
    out.config.adam_eps = config.at("adam_eps").get<double>();
    out.config.forget_bias_init = config.at("forget_bias_init").get<double>();
    out.config.weight_init_scale = config.at("weight_init_scale").get<double>();
    out.config.seed = config.at("seed").get<std::uint64_t>();
    out.config.train_fraction = config.at("train_fraction").get<double>();
    out.config.optimizer = config.at("optimizer").get<std::string>();

    const auto& report = doc.at("training_report");
    out.report.initial_validation_mse = report.at("initial_validation_mse").get<double>();
    out.report.final_train_mse = report.at("final_train_mse").get<double>();
    out.report.final_validation_mse = report.at("final_validation_mse").get<double>();
    out.report.validation_label_variance = report.at("validation_label_variance").get<double>();
    for (std::size_t j = 0; j < rnn::kOutputs; ++j)
      out.report.validation_r2[j] = report.at("validation_r2").at(j).get<double>();
    for (const auto& e : report.at("epochs")) {
      rnn::EpochStats stats;
      stats.train_mse = e.at("train_mse").get<double>();
      stats.validation_mse = e.at("validation_mse").get<double>();
      out.report.epochs.push_back(stats);
    }
    out.train_customer_ids = doc.at("train_customer_ids").get<std::vector<std::string>>();
    out.validation_customer_ids =
        doc.at("validation_customer_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return out;
}

void write_surrogate_json(const std::string& path, const surrogate::LinearSurrogate& s,
                          double r2_test, const std::array<double, 2>& r2_test_per_angle) {
  Json doc;
  doc["k"] = s.k;
  doc["degree"] = s.degree;
  doc["azimuth_rotation"] = s.azimuth_offset;
  doc["intercept"] = Json::array({s.intercept[0], s.intercept[1]});
  doc["weights"] = matrix_to_json(s.weights);
  doc["solver_rank"] = s.solver_rank;
  Json diag;
  diag["r2_train"] = s.r2_train;
  diag["r2_test"] = r2_test;
  diag["r2_test_per_angle"] = Json::array({r2_test_per_angle[0], r2_test_per_angle[1]});
  doc["diagnostics"] = std::move(diag);
  jsonio::write_file(path, jsonio::dump(doc));
}

surrogate::LinearSurrogate read_surrogate_json(const std::string& path) {
  const Json doc = jsonio::parse_file(path);
  surrogate::LinearSurrogate s;
  try {
    s.k = doc.at("k").get<std::size_t>();
    s.degree = doc.at("degree").get<int>();
    s.azimuth_offset = doc.at("azimuth_rotation").get<double>();
    s.intercept = {doc.at("intercept").at(0).get<double>(),
                   doc.at("intercept").at(1).get<double>()};
    s.weights = matrix_from_json(doc.at("weights"), 2, path + " weights");
    s.solver_rank = doc.at("solver_rank").get<std::size_t>();
    s.r2_train = doc.at("diagnostics").at("r2_train").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return s;
}

void write_fidelity_json(const std::string& path, const surrogate::FidelityReport& report) {
  Json doc;
  doc["r2_test"] = report.r2_test;
  doc["r2_train"] = report.r2_train;
  doc["r2_polynomial_test"] = report.r2_polynomial_test;
  doc["r2_test_per_angle"] = Json::array({report.r2_test_per_angle[0], report.r2_test_per_angle[1]});
  doc["nonzero_count"] = report.nonzero_count;
  doc["jointly_nonzero_rows"] = report.jointly_nonzero_rows;
  doc["coefficient_correlations"] = matrix_to_json(report.coefficient_correlations);
  jsonio::write_file(path, jsonio::dump(doc));
}

void write_hierarchy_json(const std::string& path, const segmentation::ClusterTree& tree) {
  // Nested document: children partition their parent.
  std::function<Json(const segmentation::ClusterNode&)> render =
      [&](const segmentation::ClusterNode& node) {
        Json j;
        Json key = Json::array();
        for (int p : node.prefix)
          key.push_back(std::string(1, domain::kTraitInitials[static_cast<std::size_t>(p)]));
        j["key"] = std::move(key);
        j["member_count"] = node.members.size();
        Json centroid;
        centroid["theta"] = node.centroid.theta;
        centroid["phi"] = node.centroid.phi;
        j["centroid"] = std::move(centroid);
        j["purity"] = node.purity;          // NaN serializes as null
        j["null_purity"] = node.null_purity;
        j["n_child_labels"] = node.n_child_labels;
        if (node.prefix.size() < tree.depth) {
          Json children = Json::array();
          for (const auto& candidate : tree.nodes) {
            if (candidate.prefix.size() != node.prefix.size() + 1) continue;
            if (!std::equal(node.prefix.begin(), node.prefix.end(), candidate.prefix.begin()))
              continue;
            children.push_back(render(candidate));
          }
          j["children"] = std::move(children);
        }
        return j;
      };

  Json doc;
  doc["depth"] = tree.depth;
  Json roots = Json::array();
  for (const auto& node : tree.nodes)
    if (node.prefix.size() == 1) roots.push_back(render(node));
  doc["nodes"] = std::move(roots);
  jsonio::write_file(path, jsonio::dump(doc));
}

}  // namespace microseg::artifacts
