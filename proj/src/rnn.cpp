#include "microseg/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "microseg/errors.hpp"
#include "microseg/rng.hpp"

namespace microseg::rnn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::array<double, kOutputs> mse_gradient(const std::array<double, kOutputs>& prediction,
                                          const std::array<double, kOutputs>& target) {
  // loss = (1/5) sum (pred - target)^2
  std::array<double, kOutputs> g;
  for (std::size_t j = 0; j < kOutputs; ++j)
    g[j] = 2.0 * (prediction[j] - target[j]) / static_cast<double>(kOutputs);
  return g;
}

double mse(const std::array<double, kOutputs>& prediction,
           const std::array<double, kOutputs>& target) {
  double s = 0.0;
  for (std::size_t j = 0; j < kOutputs; ++j) {
    const double d = prediction[j] - target[j];
    s += d * d;
  }
  return s / static_cast<double>(kOutputs);
}

}  // namespace

LstmModel LstmModel::zeros(std::size_t input_dim) {
  LstmModel m;
  m.input_dim = input_dim;
  m.params.assign(m.parameter_count(), 0.0);
  return m;
}

LstmModel LstmModel::init(std::size_t input_dim, double weight_scale, double forget_bias,
                          std::uint64_t seed) {
  LstmModel m = zeros(input_dim);
  rng::Stream stream(seed);
  for (double& p : m.params) p = stream.uniform(-weight_scale, weight_scale);
  for (std::size_t u = 0; u < kHidden; ++u) m.b(kForget)[u] = forget_bias;
  return m;
}

void LstmModel::validate() const {
  if (input_dim == 0) throw DimensionError("lstm model: zero input dimension");
  if (params.size() != parameter_count())
    throw DimensionError("lstm model: parameter vector has wrong length");
  for (double p : params)
    if (!std::isfinite(p)) throw DataError("lstm model: non-finite parameter");
}

ForwardCache forward(const LstmModel& model, const Matrix& inputs) {
  const std::size_t t_count = inputs.rows();
  const std::size_t k = inputs.cols();
  if (t_count == 0) throw DimensionError("forward: empty input sequence");
  if (k != model.input_dim)
    throw DimensionError("forward: input has " + std::to_string(k) + " classes, model expects " +
                         std::to_string(model.input_dim));

  ForwardCache cache;
  cache.input_dim = k;
  cache.x = inputs;
  for (auto& g : cache.gates) g = Matrix(t_count, kHidden);
  cache.cell = Matrix(t_count, kHidden);
  cache.tanh_cell = Matrix(t_count, kHidden);
  cache.hidden = Matrix(t_count, kHidden);

  std::array<double, kHidden> h_prev{}, c_prev{};
  for (std::size_t t = 0; t < t_count; ++t) {
    const double* x = inputs.row(t);
    std::array<std::array<double, kHidden>, 4> pre{};
    for (int g = 0; g < 4; ++g) {
      const double* wg = model.w(static_cast<Gate>(g));
      const double* ug = model.u(static_cast<Gate>(g));
      const double* bg = model.b(static_cast<Gate>(g));
      for (std::size_t uu = 0; uu < kHidden; ++uu) {
        double s = bg[uu];
        const double* wrow = wg + uu * k;
        for (std::size_t c = 0; c < k; ++c) s += wrow[c] * x[c];
        const double* urow = ug + uu * kHidden;
        for (std::size_t v = 0; v < kHidden; ++v) s += urow[v] * h_prev[v];
        pre[static_cast<std::size_t>(g)][uu] = s;
      }
    }
    for (std::size_t uu = 0; uu < kHidden; ++uu) {
      const double gi = sigmoid(pre[kInput][uu]);
      const double gf = sigmoid(pre[kForget][uu]);
      const double go = sigmoid(pre[kOutput][uu]);
      const double gc = std::tanh(pre[kCandidate][uu]);
      const double c_new = gf * c_prev[uu] + gi * gc;
      const double tc = std::tanh(c_new);
      cache.gates[kInput](t, uu) = gi;
      cache.gates[kForget](t, uu) = gf;
      cache.gates[kOutput](t, uu) = go;
      cache.gates[kCandidate](t, uu) = gc;
      cache.cell(t, uu) = c_new;
      cache.tanh_cell(t, uu) = tc;
      cache.hidden(t, uu) = go * tc;
    }
    for (std::size_t uu = 0; uu < kHidden; ++uu) {
      h_prev[uu] = cache.hidden(t, uu);
      c_prev[uu] = cache.cell(t, uu);
    }
  }

  const double* wo = model.w_out();
  const double* bo = model.b_out();
  for (std::size_t j = 0; j < kOutputs; ++j) {
    double s = bo[j];
    for (std::size_t uu = 0; uu < kHidden; ++uu) s += wo[j * kHidden + uu] * h_prev[uu];
    cache.prediction[j] = s;
  }
  return cache;
}

Trajectory trajectory_from_cache(const ForwardCache& cache, const std::string& customer_id) {
  Trajectory traj;
  traj.customer_id = customer_id;
  traj.points.resize(cache.hidden.rows());
  for (std::size_t t = 0; t < cache.hidden.rows(); ++t)
    for (std::size_t uu = 0; uu < kHidden; ++uu) traj.points[t][uu] = cache.hidden(t, uu);
  return traj;
}

std::vector<double> backward(const LstmModel& model, const ForwardCache& cache,
                             const std::array<double, kOutputs>& d_prediction) {
  if (cache.input_dim != model.input_dim || cache.x.cols() != model.input_dim)
    throw CacheError("backward: cache does not match the model's input dimension");
  const std::size_t t_count = cache.x.rows();
  const std::size_t k = model.input_dim;

  std::vector<double> grad(model.parameter_count(), 0.0);
  // Gradient views mirroring the parameter layout.
  auto gw = [&](Gate g) { return grad.data() + static_cast<std::size_t>(g) * kHidden * k; };
  auto gu = [&](Gate g) { return grad.data() + 12 * k + static_cast<std::size_t>(g) * 9; };
  auto gb = [&](Gate g) { return grad.data() + 12 * k + 36 + static_cast<std::size_t>(g) * 3; };
  double* gwo = grad.data() + 12 * k + 48;
  double* gbo = grad.data() + 12 * k + 63;

  std::array<double, kHidden> dh{}, dc_next{};
  const std::size_t last = t_count - 1;
  const double* wo = model.w_out();
  for (std::size_t j = 0; j < kOutputs; ++j) {
    gbo[j] = d_prediction[j];
    for (std::size_t uu = 0; uu < kHidden; ++uu) {
      gwo[j * kHidden + uu] = d_prediction[j] * cache.hidden(last, uu);
      dh[uu] += wo[j * kHidden + uu] * d_prediction[j];
    }
  }

  for (std::size_t t = t_count; t-- > 0;) {
    std::array<std::array<double, kHidden>, 4> dpre{};
    std::array<double, kHidden> dc{};
    for (std::size_t uu = 0; uu < kHidden; ++uu) {
      const double gi = cache.gates[kInput](t, uu);
      const double gf = cache.gates[kForget](t, uu);
      const double go = cache.gates[kOutput](t, uu);
      const double gc = cache.gates[kCandidate](t, uu);
      const double tc = cache.tanh_cell(t, uu);
      const double c_prev = (t > 0) ? cache.cell(t - 1, uu) : 0.0;

      const double d_out = dh[uu] * tc;
      dpre[kOutput][uu] = d_out * go * (1.0 - go);

      dc[uu] = dh[uu] * go * (1.0 - tc * tc) + dc_next[uu];

      const double d_in = dc[uu] * gc;
      dpre[kInput][uu] = d_in * gi * (1.0 - gi);

      const double d_cand = dc[uu] * gi;
      dpre[kCandidate][uu] = d_cand * (1.0 - gc * gc);

      const double d_forget = dc[uu] * c_prev;
      dpre[kForget][uu] = d_forget * gf * (1.0 - gf);

      dc_next[uu] = dc[uu] * gf;
    }

    const double* x = cache.x.row(t);
    std::array<double, kHidden> dh_prev{};
    for (int g = 0; g < 4; ++g) {
      double* wgrad = gw(static_cast<Gate>(g));
      double* ugrad = gu(static_cast<Gate>(g));
      double* bgrad = gb(static_cast<Gate>(g));
      const double* ug = model.u(static_cast<Gate>(g));
      for (std::size_t uu = 0; uu < kHidden; ++uu) {
        const double d = dpre[static_cast<std::size_t>(g)][uu];
        if (d == 0.0) continue;
        bgrad[uu] += d;
        double* wrow = wgrad + uu * k;
        for (std::size_t c = 0; c < k; ++c) wrow[c] += d * x[c];
        if (t > 0) {
          double* urow = ugrad + uu * kHidden;
          for (std::size_t v = 0; v < kHidden; ++v) {
            urow[v] += d * cache.hidden(t - 1, v);
            dh_prev[v] += ug[uu * kHidden + v] * d;
          }
        } else {
          for (std::size_t v = 0; v < kHidden; ++v) dh_prev[v] += ug[uu * kHidden + v] * d;
        }
      }
    }
    dh = dh_prev;
  }
  return grad;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("train config: learning rate must be > 0");
  if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train config: batch size must be >= 1");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ConfigError("train config: train_fraction must be in (0, 1)");
  if (optimizer != "adam" && optimizer != "sgd")
    throw ConfigError("train config: optimizer must be 'adam' or 'sgd'");
}

namespace {

struct EvalStats {
  double mse = 0.0;
};

double dataset_mse(const LstmModel& model, const std::vector<Matrix>& inputs,
                   const std::vector<std::array<double, kOutputs>>& targets,
                   const std::vector<std::size_t>& indices) {
  double total = 0.0;
  for (std::size_t idx : indices) {
    const auto cache = forward(model, inputs[idx]);
    total += mse(cache.prediction, targets[idx]);
  }
  return indices.empty() ? 0.0 : total / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train(const synth::Dataset& dataset, const TrainConfig& config) {
  config.validate();
  const std::size_t n = dataset.customers.size();
  if (n < 2) throw EmptyDatasetError("train: need at least 2 customers");

  std::vector<Matrix> inputs(n);
  std::vector<std::array<double, kOutputs>> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = dataset.customers[i].windowed_inputs(1);
    targets[i] = dataset.customers[i].label.grades;
  }

  // Seeded 80/20 split by customer.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng::Stream split_stream(rng::derive(config.seed, rng::StreamId::split));
  split_stream.shuffle(order);
  std::size_t n_train = static_cast<std::size_t>(
      std::floor(config.train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> val_idx(order.begin() + static_cast<long>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  TrainResult result;
  result.model = LstmModel::init(dataset.k(), config.weight_init_scale, config.forget_bias_init,
                                 rng::derive(config.seed, rng::StreamId::train_init));
  LstmModel& model = result.model;

  TrainReport& report = result.report;
  report.train_indices = train_idx;
  report.validation_indices = val_idx;
  report.initial_validation_mse = dataset_mse(model, inputs, targets, val_idx);

  // Best-constant-predictor baseline: per-trait variance of validation labels.
  {
    std::array<double, kOutputs> mean{};
    for (std::size_t idx : val_idx)
      for (std::size_t j = 0; j < kOutputs; ++j) mean[j] += targets[idx][j];
    for (auto& v : mean) v /= static_cast<double>(val_idx.size());
    double var = 0.0;
    for (std::size_t idx : val_idx)
      for (std::size_t j = 0; j < kOutputs; ++j) {
        const double d = targets[idx][j] - mean[j];
        var += d * d;
      }
    report.validation_label_variance =
        var / (static_cast<double>(val_idx.size()) * static_cast<double>(kOutputs));
  }

  const std::size_t p_count = model.parameter_count();
  std::vector<double> adam_m(p_count, 0.0), adam_v(p_count, 0.0), batch_grad(p_count);
  rng::Stream shuffle_stream(rng::derive(config.seed, rng::StreamId::train_shuffle));
  std::size_t adam_step = 0;

  report.epochs.reserve(config.epochs);
  std::vector<std::size_t> epoch_order = train_idx;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_stream.shuffle(epoch_order);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < epoch_order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, epoch_order.size());
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);

      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = epoch_order[b];
        const auto cache = forward(model, inputs[idx]);
        const double sample_loss = mse(cache.prediction, targets[idx]);
        if (!std::isfinite(sample_loss))
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
        epoch_loss += sample_loss;
        auto dpred = mse_gradient(cache.prediction, targets[idx]);
        for (auto& v : dpred) v *= inv_batch;
        const auto g = backward(model, cache, dpred);
        for (std::size_t p = 0; p < p_count; ++p) batch_grad[p] += g[p];
      }

      if (config.optimizer == "adam") {
        ++adam_step;
        const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam_step));
        const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam_step));
        for (std::size_t p = 0; p < p_count; ++p) {
          adam_m[p] = config.adam_beta1 * adam_m[p] + (1.0 - config.adam_beta1) * batch_grad[p];
          adam_v[p] =
              config.adam_beta2 * adam_v[p] + (1.0 - config.adam_beta2) * batch_grad[p] * batch_grad[p];
          const double mhat = adam_m[p] / bc1;
          const double vhat = adam_v[p] / bc2;
          model.params[p] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
        }
      } else {
        for (std::size_t p = 0; p < p_count; ++p)
          model.params[p] -= config.learning_rate * batch_grad[p];
      }
    }

    EpochStats stats;
    stats.train_mse = epoch_loss / static_cast<double>(epoch_order.size());
    stats.validation_mse = dataset_mse(model, inputs, targets, val_idx);
    if (!std::isfinite(stats.validation_mse))
      throw DivergenceError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    report.epochs.push_back(stats);
  }

  report.final_train_mse = dataset_mse(model, inputs, targets, train_idx);
  report.final_validation_mse = report.epochs.back().validation_mse;

  // Per-trait validation R^2.
  {
    std::array<double, kOutputs> mean{}, ss_res{}, ss_tot{};
    for (std::size_t idx : val_idx)
      for (std::size_t j = 0; j < kOutputs; ++j) mean[j] += targets[idx][j];
    for (auto& v : mean) v /= static_cast<double>(val_idx.size());
    for (std::size_t idx : val_idx) {
      const auto cache = forward(model, inputs[idx]);
      for (std::size_t j = 0; j < kOutputs; ++j) {
        const double r = cache.prediction[j] - targets[idx][j];
        const double d = targets[idx][j] - mean[j];
        ss_res[j] += r * r;
        ss_tot[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < kOutputs; ++j)
      report.validation_r2[j] = ss_tot[j] > 0.0 ? 1.0 - ss_res[j] / ss_tot[j] : 0.0;
  }
  return result;
}

std::vector<Trajectory> extract_trajectories(const LstmModel& model, const synth::Dataset& dataset,
                                             std::size_t window) {
  std::vector<Trajectory> out;
  out.reserve(dataset.customers.size());
  for (const auto& customer : dataset.customers) {
    const auto cache = forward(model, customer.windowed_inputs(window));
    out.push_back(trajectory_from_cache(cache, customer.customer_id));
  }
  return out;
}

double batch_loss(const LstmModel& model, const std::vector<Sample>& batch) {
  double total = 0.0;
  for (const auto& sample : batch) {
    const auto cache = forward(model, sample.inputs);
    total += mse(cache.prediction, sample.target);
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> batch_gradient(const LstmModel& model, const std::vector<Sample>& batch) {
  std::vector<double> grad(model.parameter_count(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    const auto cache = forward(model, sample.inputs);
    auto dpred = mse_gradient(cache.prediction, sample.target);
    for (auto& v : dpred) v *= inv;
    const auto g = backward(model, cache, dpred);
    for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += g[p];
  }
  return grad;
}

std::vector<double> numeric_gradient(const LstmModel& model, const std::vector<Sample>& batch,
                                     double epsilon) {
  LstmModel probe = model;
  std::vector<double> grad(model.parameter_count());
  for (std::size_t p = 0; p < grad.size(); ++p) {
    const double saved = probe.params[p];
    probe.params[p] = saved + epsilon;
    const double up = batch_loss(probe, batch);
    probe.params[p] = saved - epsilon;
    const double down = batch_loss(probe, batch);
    probe.params[p] = saved;
    grad[p] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

double gradient_check(const LstmModel& model, const std::vector<Sample>& batch, double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw ConfigError("gradient_check: epsilon must be in [1e-7, 1e-3]");
  if (batch.empty()) throw EmptyDatasetError("gradient_check: empty batch");
  const auto analytic = batch_gradient(model, batch);
  const auto numeric = numeric_gradient(model, batch, epsilon);
  return max_relative_error(analytic, numeric);
}

double gradient_check_from_seed(std::uint64_t seed, double epsilon) {
  rng::Stream stream(rng::derive(seed, rng::StreamId::gradcheck));
  const std::size_t k = 4 + static_cast<std::size_t>(stream.uniform_int(9));   // 4..12
  const std::size_t t_count = 3 + static_cast<std::size_t>(stream.uniform_int(4));  // 3..6

  LstmModel model = LstmModel::zeros(k);
  for (double& p : model.params) p = stream.uniform(-0.6, 0.6);

  std::vector<Sample> batch(4);
  for (auto& sample : batch) {
    sample.inputs = Matrix(t_count, k);
    for (std::size_t t = 0; t < t_count; ++t) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        sample.inputs(t, c) = stream.uniform();
        total += sample.inputs(t, c);
      }
      for (std::size_t c = 0; c < k; ++c) sample.inputs(t, c) /= total;
    }
    for (auto& y : sample.target) y = stream.uniform();
  }
  return gradient_check(model, batch, epsilon);
}

}  // namespace microseg::rnn
