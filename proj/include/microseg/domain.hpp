#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "microseg/matrix.hpp"

namespace microseg::domain {

inline constexpr std::size_t kNumTraits = 5;

// Canonical trait order (OCEAN). File formats and all trait indexing depend
// on this order; never reorder.
inline constexpr std::array<const char*, kNumTraits> kTraitNames = {
    "openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"};
inline constexpr std::array<char, kNumTraits> kTraitInitials = {'O', 'C', 'E', 'A', 'N'};

// Normalized spending distribution over K transaction classes for one
// customer and one period. Shares are non-negative and sum to 1; the
// constructor normalizes and rejects negative input.
class SpendingProfile {
 public:
  SpendingProfile(std::string customer_id, int period_index, std::vector<double> shares);

  const std::string& customer_id() const { return customer_id_; }
  int period_index() const { return period_index_; }
  const std::vector<double>& shares() const { return shares_; }
  std::size_t k() const { return shares_.size(); }

 private:
  std::string customer_id_;
  int period_index_;
  std::vector<double> shares_;
};

// K x 5 class-to-trait scoring weights. Rows whose entries are all small
// compared to the mean magnitude count as zero (sparsity census).
struct CoefficientMatrix {
  std::vector<std::string> class_names;  // K labels
  Matrix values;                         // K x 5

  std::size_t k() const { return values.rows(); }
  void validate() const;  // finite entries, shape, names

  // Row j is non-zero iff any |entry| >= threshold_factor * mean |entry|
  // over the whole matrix.
  std::vector<bool> nonzero_rows(double threshold_factor = 0.1) const;
  std::size_t nonzero_row_count(double threshold_factor = 0.1) const;
};

// Fuzzy membership grades, one per trait, each in [0, 1] after population
// scaling.
struct TraitVector {
  std::array<double, kNumTraits> grades{};
};

// Permutation of trait indices, descending by grade; ties broken by
// ascending canonical index.
struct DominantOrder {
  std::array<int, kNumTraits> order{};

  int dominant() const { return order[0]; }
  int at_rank(std::size_t rank) const { return order[rank]; }
  // Serialized as e.g. "N>C>O>A>E".
  std::string initials() const;
  static DominantOrder parse_initials(const std::string& text);
};

// Per-trait min/max over a training population; reused to scale unseen
// customers with clamping.
struct ScalingBounds {
  std::array<double, kNumTraits> min{};
  std::array<double, kNumTraits> max{};

  TraitVector scale(const std::array<double, kNumTraits>& raw) const;
};

// t = shares^T * values. Pure; throws DimensionError on a K mismatch.
std::array<double, kNumTraits> score_traits(const SpendingProfile& profile,
                                            const CoefficientMatrix& coeffs);

// Per-trait min-max scaling of an N x 5 raw score matrix to [0, 1] grades.
// A constant column maps to 0.5 everywhere.
std::pair<std::vector<TraitVector>, ScalingBounds> scale_population(const Matrix& raw_scores);

DominantOrder dominant_order(const TraitVector& traits);

}  // namespace microseg::domain
