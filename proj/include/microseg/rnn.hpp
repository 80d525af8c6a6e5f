#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "microseg/matrix.hpp"
#include "microseg/synth.hpp"

namespace microseg::rnn {

inline constexpr std::size_t kHidden = 3;  // state-space dimensionality
inline constexpr std::size_t kOutputs = 5;

enum Gate { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

// Single-layer LSTM with 3 hidden units and a linear 3 -> 5 readout from the
// final state. All parameters live in one flat vector so the optimizer and
// the finite-difference check can treat the model as a plain point in R^P.
//
// Layout: [W_i W_f W_o W_c | U_i U_f U_o U_c | b_i b_f b_o b_c | W_out | b_out]
// with each W_g a row-major 3 x K block, U_g 3 x 3, b_g length 3,
// W_out row-major 5 x 3, b_out length 5.
struct LstmModel {
  std::size_t input_dim = 0;  // K
  std::vector<double> params;

  static LstmModel zeros(std::size_t input_dim);
  static LstmModel init(std::size_t input_dim, double weight_scale, double forget_bias,
                        std::uint64_t seed);

  std::size_t parameter_count() const { return 12 * input_dim + 68; }

  double* w(Gate g) { return params.data() + static_cast<std::size_t>(g) * kHidden * input_dim; }
  const double* w(Gate g) const {
    return params.data() + static_cast<std::size_t>(g) * kHidden * input_dim;
  }
  double* u(Gate g) { return params.data() + 12 * input_dim + static_cast<std::size_t>(g) * 9; }
  const double* u(Gate g) const {
    return params.data() + 12 * input_dim + static_cast<std::size_t>(g) * 9;
  }
  double* b(Gate g) { return params.data() + 12 * input_dim + 36 + static_cast<std::size_t>(g) * 3; }
  const double* b(Gate g) const {
    return params.data() + 12 * input_dim + 36 + static_cast<std::size_t>(g) * 3;
  }
  double* w_out() { return params.data() + 12 * input_dim + 48; }
  const double* w_out() const { return params.data() + 12 * input_dim + 48; }
  double* b_out() { return params.data() + 12 * input_dim + 63; }
  const double* b_out() const { return params.data() + 12 * input_dim + 63; }

  void validate() const;  // finite parameters
};

// Ordered hidden states h_1..h_T for one customer (post-step states; the
// initial zero state is not recorded).
struct Trajectory {
  std::string customer_id;
  std::vector<std::array<double, kHidden>> points;

  std::size_t steps() const { return points.size(); }
};

// Everything the backward pass needs from a forward pass.
struct ForwardCache {
  std::size_t input_dim = 0;
  Matrix x;                               // T x K
  std::array<Matrix, 4> gates;            // T x 3 activations per gate
  Matrix cell, tanh_cell, hidden;         // T x 3
  std::array<double, kOutputs> prediction{};
};

// Stepwise LSTM recurrence from h_0 = c_0 = 0; prediction = W_out h_T + b_out.
ForwardCache forward(const LstmModel& model, const Matrix& inputs);
Trajectory trajectory_from_cache(const ForwardCache& cache, const std::string& customer_id);

// Exact backpropagation through time. d_prediction is dLoss/dPrediction;
// returns dLoss/dTheta in the model's flat layout.
std::vector<double> backward(const LstmModel& model, const ForwardCache& cache,
                             const std::array<double, kOutputs>& d_prediction);

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double forget_bias_init = 1.0;
  double weight_init_scale = 0.2;
  std::uint64_t seed = 42;
  double train_fraction = 0.8;
  std::string optimizer = "adam";  // "adam" or "sgd" (sgd kept for oracle runs)

  void validate() const;
};

struct EpochStats {
  double train_mse = 0.0;
  double validation_mse = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double initial_validation_mse = 0.0;
  double final_train_mse = 0.0;
  double final_validation_mse = 0.0;
  double validation_label_variance = 0.0;  // MSE of the best constant predictor
  std::array<double, kOutputs> validation_r2{};
  std::vector<std::size_t> train_indices;       // customer indices in the dataset
  std::vector<std::size_t> validation_indices;
};

struct TrainResult {
  LstmModel model;
  TrainReport report;
};

// Minimizes MSE over the 5 trait grades with Adam on a seeded 80/20
// customer split. Deterministic given (dataset, config).
TrainResult train(const synth::Dataset& dataset, const TrainConfig& config);

// One forward pass per customer on trailing-window inputs (window = 1 is the
// raw per-period sequence).
std::vector<Trajectory> extract_trajectories(const LstmModel& model, const synth::Dataset& dataset,
                                             std::size_t window = 1);

// A labelled sample for gradient checking.
struct Sample {
  Matrix inputs;                        // T x K
  std::array<double, kOutputs> target{};
};

// Mean-over-batch MSE loss and its analytic gradient.
double batch_loss(const LstmModel& model, const std::vector<Sample>& batch);
std::vector<double> batch_gradient(const LstmModel& model, const std::vector<Sample>& batch);
// Central finite differences of batch_loss over every parameter.
std::vector<double> numeric_gradient(const LstmModel& model, const std::vector<Sample>& batch,
                                     double epsilon);
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b);

// Central-difference check of backward over every parameter; returns the
// maximum relative error |a-b| / max(|a|, |b|, 1e-8).
double gradient_check(const LstmModel& model, const std::vector<Sample>& batch, double epsilon);

// Random small model + batch from a seed; used by the CLI and acceptance.
double gradient_check_from_seed(std::uint64_t seed, double epsilon = 1e-5);

}  // namespace microseg::rnn
