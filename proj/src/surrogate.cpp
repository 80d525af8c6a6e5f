#include "microseg/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "microseg/errors.hpp"
#include "microseg/lstsq.hpp"

namespace microseg::surrogate {
namespace {

constexpr double kDegenerateNorm = 1e-9;

Matrix design_matrix(const Matrix& profiles, int degree) {
  const std::size_t n = profiles.rows();
  const std::size_t k = profiles.cols();
  if (degree == 1) {
    Matrix d(n, k + 1);
    for (std::size_t i = 0; i < n; ++i) {
      d(i, 0) = 1.0;
      for (std::size_t j = 0; j < k; ++j) d(i, j + 1) = profiles(i, j);
    }
    return d;
  }
  const std::size_t expanded = k + k * (k + 1) / 2;
  Matrix d(n, expanded + 1);
  for (std::size_t i = 0; i < n; ++i) {
    d(i, 0) = 1.0;
    std::vector<double> row(profiles.row(i), profiles.row(i) + k);
    const auto features = expand_quadratic(row);
    for (std::size_t j = 0; j < features.size(); ++j) d(i, j + 1) = features[j];
  }
  return d;
}

Matrix rotated_targets(const std::vector<DirectionAngles>& angles, double rho) {
  Matrix y(angles.size(), 2);
  for (std::size_t i = 0; i < angles.size(); ++i) {
    y(i, 0) = wrap_angle(angles[i].theta - rho);
    y(i, 1) = angles[i].phi;
  }
  return y;
}

Matrix predictions_matrix(const LinearSurrogate& s, const Matrix& profiles) {
  Matrix out(profiles.rows(), 2);
  for (std::size_t i = 0; i < profiles.rows(); ++i) {
    std::vector<double> row(profiles.row(i), profiles.row(i) + profiles.cols());
    const auto features = s.degree == 1 ? row : expand_quadratic(row);
    for (std::size_t a = 0; a < 2; ++a) {
      double v = s.intercept[a];
      for (std::size_t j = 0; j < features.size(); ++j) v += s.weights(j, a) * features[j];
      out(i, a) = v;
    }
  }
  return out;
}

LinearSurrogate fit_impl(const Matrix& profiles, const std::vector<DirectionAngles>& angles,
                         int degree) {
  if (profiles.rows() == 0) throw EmptyDatasetError("surrogate fit: no rows");
  if (profiles.rows() != angles.size())
    throw DimensionError("surrogate fit: profile and angle counts differ");

  LinearSurrogate s;
  s.k = profiles.cols();
  s.degree = degree;
  s.azimuth_offset = azimuth_rotation(angles);

  const Matrix design = design_matrix(profiles, degree);
  const Matrix targets = rotated_targets(angles, s.azimuth_offset);
  const auto solution = lstsq::solve_min_norm(design, targets);

  s.solver_rank = solution.rank;
  s.intercept = {solution.coefficients(0, 0), solution.coefficients(0, 1)};
  s.weights = Matrix(design.cols() - 1, 2);
  for (std::size_t j = 1; j < design.cols(); ++j)
    for (std::size_t a = 0; a < 2; ++a) s.weights(j - 1, a) = solution.coefficients(j, a);

  s.r2_train = r_squared(predictions_matrix(s, profiles), targets);
  return s;
}

}  // namespace

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);  // (-pi, pi] up to the -pi edge
  if (w <= -M_PI) w = M_PI;
  return w;
}

std::array<double, 3> direction_vector(const rnn::Trajectory& trajectory, DirectionMode mode) {
  if (trajectory.points.size() < 2)
    throw DimensionError("direction_vector: trajectory needs at least 2 points");
  const auto& last = trajectory.points.back();
  if (mode == DirectionMode::final_point) return last;
  const auto& first = trajectory.points.front();
  return {last[0] - first[0], last[1] - first[1], last[2] - first[2]};
}

DirectionAngles vector_angles(const std::array<double, 3>& d) {
  const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (!(norm >= kDegenerateNorm))
    throw DegenerateTrajectoryError("vector_angles: displacement norm below 1e-9");
  DirectionAngles out;
  out.theta = (d[0] == 0.0 && d[1] == 0.0) ? 0.0 : std::atan2(d[1], d[0]);
  out.phi = std::asin(std::clamp(d[2] / norm, -1.0, 1.0));
  return out;
}

DirectionAngles trajectory_angles(const rnn::Trajectory& trajectory, DirectionMode mode) {
  return vector_angles(direction_vector(trajectory, mode));
}

std::array<double, 3> unit_from_angles(const DirectionAngles& angles) {
  const double cp = std::cos(angles.phi);
  return {cp * std::cos(angles.theta), cp * std::sin(angles.theta), std::sin(angles.phi)};
}

double azimuth_rotation(const std::vector<DirectionAngles>& angles) {
  if (angles.empty()) return 0.0;
  std::vector<double> thetas;
  thetas.reserve(angles.size());
  for (const auto& a : angles) thetas.push_back(wrap_angle(a.theta));
  std::sort(thetas.begin(), thetas.end());

  // Largest circular gap between consecutive azimuths; the cut goes in its
  // middle so no dense region straddles +-pi after rotation.
  double best_gap = 2.0 * M_PI - (thetas.back() - thetas.front());
  double cut = thetas.back() + 0.5 * best_gap;
  for (std::size_t i = 1; i < thetas.size(); ++i) {
    const double gap = thetas[i] - thetas[i - 1];
    if (gap > best_gap) {
      best_gap = gap;
      cut = thetas[i - 1] + 0.5 * gap;
    }
  }
  // wrap(theta - rho) places the cut at +-pi.
  return wrap_angle(cut + M_PI);
}

DirectionAngles LinearSurrogate::predict(const std::vector<double>& shares) const {
  if (shares.size() != k) throw DimensionError("surrogate predict: share count differs from fit");
  const auto features = degree == 1 ? shares : expand_quadratic(shares);
  std::array<double, 2> v = intercept;
  for (std::size_t j = 0; j < features.size(); ++j) {
    v[0] += weights(j, 0) * features[j];
    v[1] += weights(j, 1) * features[j];
  }
  DirectionAngles out;
  out.theta = wrap_angle(v[0] + azimuth_offset);
  out.phi = std::clamp(v[1], -M_PI / 2.0, M_PI / 2.0);
  return out;
}

std::vector<bool> LinearSurrogate::nonzero_rows(double threshold_factor) const {
  double mean_abs = 0.0;
  for (double v : weights.data()) mean_abs += std::abs(v);
  if (!weights.data().empty()) mean_abs /= static_cast<double>(weights.data().size());
  const double threshold = threshold_factor * mean_abs;
  std::vector<bool> out(weights.rows(), false);
  for (std::size_t i = 0; i < weights.rows(); ++i)
    out[i] = std::abs(weights(i, 0)) >= threshold || std::abs(weights(i, 1)) >= threshold;
  return out;
}

std::size_t LinearSurrogate::nonzero_row_count(double threshold_factor) const {
  const auto rows = nonzero_rows(threshold_factor);
  return static_cast<std::size_t>(std::count(rows.begin(), rows.end(), true));
}

std::vector<double> expand_quadratic(const std::vector<double>& x) {
  const std::size_t k = x.size();
  std::vector<double> out;
  out.reserve(k + k * (k + 1) / 2);
  out.insert(out.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) out.push_back(x[i] * x[j]);
  return out;
}

LinearSurrogate fit_linear(const Matrix& profiles, const std::vector<DirectionAngles>& angles) {
  return fit_impl(profiles, angles, 1);
}

LinearSurrogate fit_polynomial_baseline(const Matrix& profiles,
                                        const std::vector<DirectionAngles>& angles, int degree) {
  if (degree != 2) throw ConfigError("polynomial baseline: only degree 2 is supported");
  return fit_impl(profiles, angles, degree);
}

double r_squared(const Matrix& predictions, const Matrix& truth) {
  if (truth.rows() < 2) throw EmptyDatasetError("r_squared: need at least 2 rows");
  if (predictions.rows() != truth.rows() || predictions.cols() != truth.cols())
    throw DimensionError("r_squared: shape mismatch");

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t j = 0; j < truth.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < truth.rows(); ++i) mean += truth(i, j);
    mean /= static_cast<double>(truth.rows());
    for (std::size_t i = 0; i < truth.rows(); ++i) {
      const double r = truth(i, j) - predictions(i, j);
      const double d = truth(i, j) - mean;
      ss_res += r * r;
      ss_tot += d * d;
    }
  }
  if (ss_tot < 1e-12)
    return ss_res < 1e-12 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

double evaluate_r2(const LinearSurrogate& surrogate, const Matrix& profiles,
                   const std::vector<DirectionAngles>& angles) {
  return r_squared(predictions_matrix(surrogate, profiles),
                   rotated_targets(angles, surrogate.azimuth_offset));
}

std::array<double, 2> evaluate_r2_per_angle(const LinearSurrogate& surrogate,
                                            const Matrix& profiles,
                                            const std::vector<DirectionAngles>& angles) {
  const Matrix pred = predictions_matrix(surrogate, profiles);
  const Matrix truth = rotated_targets(angles, surrogate.azimuth_offset);
  std::array<double, 2> out{};
  for (std::size_t a = 0; a < 2; ++a) {
    Matrix p(truth.rows(), 1), t(truth.rows(), 1);
    for (std::size_t i = 0; i < truth.rows(); ++i) {
      p(i, 0) = pred(i, a);
      t(i, 0) = truth(i, a);
    }
    out[a] = r_squared(p, t);
  }
  return out;
}

FidelityReport evaluate_fidelity(const LinearSurrogate& surrogate,
                                 const domain::CoefficientMatrix& coeffs,
                                 const Matrix& test_profiles,
                                 const std::vector<DirectionAngles>& test_angles,
                                 double nonzero_threshold) {
  if (surrogate.degree != 1)
    throw ConfigError("evaluate_fidelity: expects the linear surrogate");
  if (surrogate.k != coeffs.k())
    throw DimensionError("evaluate_fidelity: surrogate and coefficients disagree on K");

  FidelityReport report;
  report.r2_train = surrogate.r2_train;
  report.r2_test = evaluate_r2(surrogate, test_profiles, test_angles);
  report.r2_test_per_angle = evaluate_r2_per_angle(surrogate, test_profiles, test_angles);
  report.r2_polynomial_test = std::numeric_limits<double>::quiet_NaN();
  report.nonzero_count = surrogate.nonzero_row_count(nonzero_threshold);

  const auto coeff_rows = coeffs.nonzero_rows(nonzero_threshold);
  const auto surr_rows = surrogate.nonzero_rows(nonzero_threshold);
  std::vector<std::size_t> joint;
  for (std::size_t i = 0; i < coeffs.k(); ++i)
    if (coeff_rows[i] && surr_rows[i]) joint.push_back(i);
  report.jointly_nonzero_rows = joint.size();

  report.coefficient_correlations =
      Matrix(domain::kNumTraits, 2, std::numeric_limits<double>::quiet_NaN());
  if (joint.size() >= 3) {
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) {
      for (std::size_t a = 0; a < 2; ++a) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i : joint) {
          mx += coeffs.values(i, t);
          my += surrogate.weights(i, a);
        }
        mx /= static_cast<double>(joint.size());
        my /= static_cast<double>(joint.size());
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t i : joint) {
          const double dx = coeffs.values(i, t) - mx;
          const double dy = surrogate.weights(i, a) - my;
          sxy += dx * dy;
          sxx += dx * dx;
          syy += dy * dy;
        }
        if (sxx > 0.0 && syy > 0.0)
          report.coefficient_correlations(t, a) = sxy / std::sqrt(sxx * syy);
      }
    }
  }
  return report;
}

}  // namespace microseg::surrogate
