#pragma once

#include <string>
#include <vector>

#include "microseg/domain.hpp"
#include "microseg/jsonio.hpp"
#include "microseg/rnn.hpp"
#include "microseg/segmentation.hpp"
#include "microseg/surrogate.hpp"
#include "microseg/synth.hpp"

// Readers and writers for every external file format. All writers emit
// deterministic bytes: \n line endings, no trailing separators, floats at 17
// significant digits.
namespace microseg::artifacts {

// coefficients.csv: class_id,class_name,openness,...,neuroticism
void write_coefficients_csv(const std::string& path, const domain::CoefficientMatrix& coeffs);
domain::CoefficientMatrix read_coefficients_csv(const std::string& path);

// traits.csv: customer_id,openness,...,neuroticism,dominant_order
struct TraitRow {
  std::string customer_id;
  domain::TraitVector traits;
  domain::DominantOrder order;
};
void write_traits_csv(const std::string& path, const std::vector<TraitRow>& rows);
std::vector<TraitRow> read_traits_csv(const std::string& path);

// transactions.csv: customer_id,bucket,class_id,amount
void write_transactions_csv(const std::string& path,
                            const std::vector<synth::RawTransaction>& rows);
std::vector<synth::RawTransaction> read_transactions_csv(const std::string& path);

// trajectories.csv: customer_id,step,h1,h2,h3
void write_trajectories_csv(const std::string& path,
                            const std::vector<rnn::Trajectory>& trajectories);
std::vector<rnn::Trajectory> read_trajectories_csv(const std::string& path);

// angles.csv: customer_id,theta,phi,dominant_order
struct AngleRow {
  std::string customer_id;
  surrogate::DirectionAngles angles;
  domain::DominantOrder order;
};
void write_angles_csv(const std::string& path, const std::vector<AngleRow>& rows);
std::vector<AngleRow> read_angles_csv(const std::string& path);

// stability.csv: customer_id,coarse_cluster,fine_cluster,divergence_rad
// (degenerate customers are excluded; they are counted in the report)
void write_stability_csv(const std::string& path, const segmentation::StabilityReport& report);

void write_dataset_json(const std::string& path, const synth::Dataset& dataset);
synth::Dataset read_dataset_json(const std::string& path);

struct ModelArtifact {
  rnn::LstmModel model;
  rnn::TrainConfig config;
  rnn::TrainReport report;
  std::vector<std::string> train_customer_ids;
  std::vector<std::string> validation_customer_ids;
};
void write_model_json(const std::string& path, const ModelArtifact& artifact);
ModelArtifact read_model_json(const std::string& path);

void write_surrogate_json(const std::string& path, const surrogate::LinearSurrogate& surrogate,
                          double r2_test, const std::array<double, 2>& r2_test_per_angle);
surrogate::LinearSurrogate read_surrogate_json(const std::string& path);

void write_fidelity_json(const std::string& path, const surrogate::FidelityReport& report);

void write_hierarchy_json(const std::string& path, const segmentation::ClusterTree& tree);

}  // namespace microseg::artifacts
