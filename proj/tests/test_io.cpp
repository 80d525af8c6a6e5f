#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "microseg/artifacts.hpp"
#include "microseg/errors.hpp"
#include "microseg/jsonio.hpp"
#include "microseg/rng.hpp"
#include "microseg/synth.hpp"

using namespace microseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("microseg_io_test_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("format_double round-trips random doubles exactly") {
  rng::Stream stream(808);
  for (int rep = 0; rep < 2000; ++rep) {
    double v;
    switch (rep % 3) {
      case 0:
        v = stream.normal();
        break;
      case 1:
        v = stream.normal() * 1e12;
        break;
      default:
        v = stream.normal() * 1e-12;
        break;
    }
    const std::string text = jsonio::format_double(v);
    CHECK(std::stod(text) == v);
  }
}

TEST_CASE("json dump: ordered keys, newline endings, null for non-finite") {
  jsonio::Json doc;
  doc["zeta"] = 1.0;
  doc["alpha"] = std::nan("");
  doc["list"] = jsonio::Json::array({1, 2.5});
  const std::string text = jsonio::dump(doc);
  CHECK(text.find("\"zeta\"") < text.find("\"alpha\""));  // insertion order kept
  CHECK(text.find("null") != std::string::npos);
  CHECK(text.back() == '\n');
  CHECK(text.find("\r") == std::string::npos);

  const auto parsed = jsonio::Json::parse(text);
  CHECK(parsed.at("zeta").get<double>() == 1.0);
  CHECK(parsed.at("alpha").is_null());
}

TEST_CASE("coefficients csv round-trip") {
  TempDir dir;
  const auto coeffs = synth::generate_coefficients(13, 9, 77);
  artifacts::write_coefficients_csv(dir.file("coefficients.csv"), coeffs);
  const auto back = artifacts::read_coefficients_csv(dir.file("coefficients.csv"));
  CHECK(back.class_names == coeffs.class_names);
  CHECK(back.values.data() == coeffs.values.data());
}

TEST_CASE("traits csv round-trip") {
  TempDir dir;
  std::vector<artifacts::TraitRow> rows;
  rng::Stream stream(15);
  for (int i = 0; i < 8; ++i) {
    artifacts::TraitRow row;
    row.customer_id = "C" + std::to_string(i);
    for (auto& g : row.traits.grades) g = stream.uniform();
    row.order = domain::dominant_order(row.traits);
    rows.push_back(row);
  }
  artifacts::write_traits_csv(dir.file("traits.csv"), rows);
  const auto back = artifacts::read_traits_csv(dir.file("traits.csv"));
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].customer_id == rows[i].customer_id);
    CHECK(back[i].traits.grades == rows[i].traits.grades);
    CHECK(back[i].order.order == rows[i].order.order);
  }
}

TEST_CASE("transactions csv round-trip and header validation") {
  TempDir dir;
  std::vector<synth::RawTransaction> rows = {{"c1", 0, 3, 5.25}, {"c2", 1, 0, 0.125}};
  artifacts::write_transactions_csv(dir.file("transactions.csv"), rows);
  const auto back = artifacts::read_transactions_csv(dir.file("transactions.csv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].customer_id == "c1");
  CHECK(back[0].bucket == 0);
  CHECK(back[0].class_id == 3);
  CHECK(back[0].amount == 5.25);

  jsonio::write_file(dir.file("bad.csv"), "wrong,header\n1,2\n");
  CHECK_THROWS_AS(artifacts::read_transactions_csv(dir.file("bad.csv")), SchemaError);
}

TEST_CASE("dataset json round-trip preserves structure and metadata") {
  TempDir dir;
  synth::SynthConfig config;
  config.n_customers = 12;
  config.n_periods = 4;
  config.k_classes = 9;
  config.n_nonzero_rows = 6;
  config.regime_switch_fraction = 0.5;
  config.seed = 3131;
  const auto ds = synth::generate_population(config);
  artifacts::write_dataset_json(dir.file("dataset.json"), ds);
  const auto back = artifacts::read_dataset_json(dir.file("dataset.json"));

  CHECK(back.config.n_customers == config.n_customers);
  CHECK(back.config.seed == config.seed);
  CHECK(back.coefficients.values.data() == ds.coefficients.values.data());
  REQUIRE(back.customers.size() == ds.customers.size());
  for (std::size_t i = 0; i < ds.customers.size(); ++i) {
    const auto& a = ds.customers[i];
    const auto& b = back.customers[i];
    CHECK(a.customer_id == b.customer_id);
    CHECK(a.regime_switch == b.regime_switch);
    CHECK(a.switch_period == b.switch_period);
    CHECK(a.intended_dominant == b.intended_dominant);
    CHECK(a.label_order.order == b.label_order.order);
    for (std::size_t t = 0; t < a.profiles.size(); ++t)
      for (std::size_t k = 0; k < a.profiles[t].k(); ++k)
        CHECK(b.profiles[t].shares()[k] ==
              doctest::Approx(a.profiles[t].shares()[k]).epsilon(1e-14));
  }
}

TEST_CASE("model json round-trips the parameters bit-exactly") {
  TempDir dir;
  artifacts::ModelArtifact artifact;
  artifact.model = rnn::LstmModel::init(7, 0.3, 1.0, 909);
  artifact.config.epochs = 17;
  artifact.config.seed = 909;
  artifact.report.final_validation_mse = 0.0123;
  artifact.report.validation_r2 = {0.1, 0.2, 0.3, 0.4, 0.5};
  rnn::EpochStats stats;
  stats.train_mse = 0.5;
  stats.validation_mse = 0.6;
  artifact.report.epochs = {stats};
  artifact.train_customer_ids = {"C1", "C2"};
  artifact.validation_customer_ids = {"C3"};
  artifacts::write_model_json(dir.file("model.json"), artifact);
  const auto back = artifacts::read_model_json(dir.file("model.json"));
  CHECK(back.model.input_dim == 7);
  CHECK(back.model.params == artifact.model.params);
  CHECK(back.config.epochs == 17);
  CHECK(back.report.epochs.size() == 1);
  CHECK(back.validation_customer_ids == artifact.validation_customer_ids);
}

TEST_CASE("trajectories and angles csv round-trip") {
  TempDir dir;
  std::vector<rnn::Trajectory> trajectories(2);
  rng::Stream stream(44);
  for (std::size_t i = 0; i < 2; ++i) {
    trajectories[i].customer_id = "C" + std::to_string(i);
    for (int t = 0; t < 4; ++t)
      trajectories[i].points.push_back({stream.uniform(-1, 1), stream.uniform(-1, 1),
                                        stream.uniform(-1, 1)});
  }
  artifacts::write_trajectories_csv(dir.file("trajectories.csv"), trajectories);
  const auto back = artifacts::read_trajectories_csv(dir.file("trajectories.csv"));
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(back[i].points == trajectories[i].points);

  std::vector<artifacts::AngleRow> rows;
  for (int i = 0; i < 3; ++i) {
    artifacts::AngleRow row;
    row.customer_id = "C" + std::to_string(i);
    row.angles.theta = stream.uniform(-M_PI, M_PI);
    row.angles.phi = stream.uniform(-M_PI / 2, M_PI / 2);
    domain::TraitVector tv;
    for (auto& g : tv.grades) g = stream.uniform();
    row.order = domain::dominant_order(tv);
    rows.push_back(row);
  }
  artifacts::write_angles_csv(dir.file("angles.csv"), rows);
  const auto angles_back = artifacts::read_angles_csv(dir.file("angles.csv"));
  REQUIRE(angles_back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(angles_back[i].angles.theta == rows[i].angles.theta);
    CHECK(angles_back[i].angles.phi == rows[i].angles.phi);
    CHECK(angles_back[i].order.order == rows[i].order.order);
  }
}

TEST_CASE("missing files raise StageOrderError") {
  CHECK_THROWS_AS(jsonio::read_file("/nonexistent/microseg/file.json"), StageOrderError);
}
