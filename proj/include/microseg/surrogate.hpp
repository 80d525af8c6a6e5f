#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "microseg/domain.hpp"
#include "microseg/matrix.hpp"
#include "microseg/rnn.hpp"

namespace microseg::surrogate {

// Azimuth/elevation pair fully describing a direction in 3-space.
// theta in (-pi, pi], phi in [-pi/2, pi/2].
struct DirectionAngles {
  double theta = 0.0;
  double phi = 0.0;
};

enum class DirectionMode {
  net_displacement,  // h_T - h_1 (default)
  final_point,       // h_T viewed from the origin (sensitivity runs)
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

// Net displacement (or final point) of a trajectory.
std::array<double, 3> direction_vector(const rnn::Trajectory& trajectory,
                                       DirectionMode mode = DirectionMode::net_displacement);

// theta = atan2(d_y, d_x), phi = asin(d_z / |d|); theta = 0 when d_x = d_y = 0.
// Throws DegenerateTrajectoryError when |d| < 1e-9.
DirectionAngles vector_angles(const std::array<double, 3>& d);
DirectionAngles trajectory_angles(const rnn::Trajectory& trajectory,
                                  DirectionMode mode = DirectionMode::net_displacement);

// Unit vector (cos phi cos theta, cos phi sin theta, sin phi).
std::array<double, 3> unit_from_angles(const DirectionAngles& angles);

// Rotation that moves the azimuth cut (+-pi) into the largest circular gap
// of the data, so that wrapped residuals behave linearly. Returns the offset
// rho; fitted and evaluated azimuths are wrap(theta - rho).
double azimuth_rotation(const std::vector<DirectionAngles>& angles);

// Linear map from K spending shares to the two direction angles, fitted by
// minimum-norm least squares with an intercept. degree = 2 adds squared and
// pairwise-product features (the polynomial baseline).
struct LinearSurrogate {
  std::size_t k = 0;       // raw feature count
  int degree = 1;          // 1 = linear, 2 = quadratic expansion
  Matrix weights;          // n_features x 2 (theta', phi)
  std::array<double, 2> intercept{};
  double azimuth_offset = 0.0;  // rho applied to azimuths before fitting
  std::size_t solver_rank = 0;
  double r2_train = 0.0;

  DirectionAngles predict(const std::vector<double>& shares) const;
  // Row non-zero iff any |entry| >= threshold_factor * mean |entry| over all
  // 2K weights. Only meaningful for degree = 1.
  std::vector<bool> nonzero_rows(double threshold_factor = 0.1) const;
  std::size_t nonzero_row_count(double threshold_factor = 0.1) const;
};

// Degree-2 expansion: [x, x_i * x_j for i <= j].
std::vector<double> expand_quadratic(const std::vector<double>& x);

LinearSurrogate fit_linear(const Matrix& profiles, const std::vector<DirectionAngles>& angles);
LinearSurrogate fit_polynomial_baseline(const Matrix& profiles,
                                        const std::vector<DirectionAngles>& angles,
                                        int degree = 2);

// Pooled coefficient of determination over both target columns.
// If SS_tot < 1e-12: 1 when SS_res < 1e-12, else -inf (reported as failure).
double r_squared(const Matrix& predictions, const Matrix& truth);

// Pooled R^2 of a surrogate on (rotated theta, phi) targets.
double evaluate_r2(const LinearSurrogate& surrogate, const Matrix& profiles,
                   const std::vector<DirectionAngles>& angles);
std::array<double, 2> evaluate_r2_per_angle(const LinearSurrogate& surrogate,
                                            const Matrix& profiles,
                                            const std::vector<DirectionAngles>& angles);

struct FidelityReport {
  double r2_test = 0.0;
  double r2_train = 0.0;
  double r2_polynomial_test = 0.0;  // filled by the pipeline
  std::array<double, 2> r2_test_per_angle{};
  std::size_t nonzero_count = 0;
  std::size_t jointly_nonzero_rows = 0;
  // 5 x 2 Pearson r between scoring-coefficient trait columns and surrogate
  // angle columns over jointly non-zero rows; NaN = not available.
  Matrix coefficient_correlations;
};

FidelityReport evaluate_fidelity(const LinearSurrogate& surrogate,
                                 const domain::CoefficientMatrix& coeffs,
                                 const Matrix& test_profiles,
                                 const std::vector<DirectionAngles>& test_angles,
                                 double nonzero_threshold = 0.1);

}  // namespace microseg::surrogate
