#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "microseg/domain.hpp"
#include "microseg/matrix.hpp"

namespace microseg::synth {

// Seeded generator configuration. Defaults are the desk-scale stand-in for
// the proprietary source data.
struct SynthConfig {
  std::size_t n_customers = 2000;
  std::size_t n_periods = 6;   // T
  std::size_t k_classes = 97;  // K
  std::size_t n_nonzero_rows = 61;
  double trait_signal_strength = 3.0;
  double noise_scale = 0.1;
  double regime_switch_fraction = 0.1;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError
};

struct CustomerRecord {
  std::string customer_id;
  std::vector<domain::SpendingProfile> profiles;     // T per-period profiles
  std::vector<domain::TraitVector> period_traits;    // T, scaled with the population bounds
  std::vector<domain::DominantOrder> period_orders;  // T
  domain::TraitVector label;          // from the period-averaged profile; training target
  domain::DominantOrder label_order;
  bool regime_switch = false;
  int switch_period = -1;        // in [1, T-1] when regime_switch
  int intended_dominant = -1;    // generator intent before any switch
  int intended_dominant_post = -1;  // intent after the switch (-1 if none)

  // Mean of the per-period share vectors; stays on the simplex.
  std::vector<double> mean_shares() const;
  // T x K input matrix where each row is the trailing mean over `window`
  // periods (clamped at the history start). window = 1 reproduces the raw
  // per-period profiles; window = T makes the final row the full-history
  // aggregate.
  Matrix windowed_inputs(std::size_t window) const;
};

struct Dataset {
  SynthConfig config;
  domain::CoefficientMatrix coefficients;
  domain::ScalingBounds scaling;
  std::vector<CustomerRecord> customers;

  std::size_t k() const { return coefficients.k(); }
  std::size_t periods() const { return config.n_periods; }
  std::size_t n_switched() const;
};

// Exactly n_nonzero_rows rows (chosen at random) get standard-normal
// entries; the rest are exactly zero. Deterministic given the seed.
domain::CoefficientMatrix generate_coefficients(std::size_t k_classes, std::size_t n_nonzero_rows,
                                                std::uint64_t seed);

// Seeded synthetic population with one intended dominant trait per customer,
// per-period relative noise and optional one-shot regime switches. Labels
// come from score_traits + scale_population on period-averaged profiles.
Dataset generate_population(const SynthConfig& config, const domain::CoefficientMatrix& coeffs);
Dataset generate_population(const SynthConfig& config);

struct RawTransaction {
  std::string customer_id;
  long bucket = 0;
  std::size_t class_id = 0;
  double amount = 0.0;
};

// Sums amounts per class over consecutive bucket windows and normalizes each
// window to the simplex. Buckets run 0..B-1 where B is max bucket + 1;
// window_periods must divide B. One profile per (customer, window), sorted
// by customer id then window.
std::vector<domain::SpendingProfile> aggregate_transactions(
    const std::vector<RawTransaction>& rows, std::size_t window_periods, std::size_t k_classes);

}  // namespace microseg::synth
