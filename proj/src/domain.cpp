#include "microseg/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "microseg/errors.hpp"

namespace microseg::domain {

SpendingProfile::SpendingProfile(std::string customer_id, int period_index,
                                 std::vector<double> shares)
    : customer_id_(std::move(customer_id)),
      period_index_(period_index),
      shares_(std::move(shares)) {
  if (period_index_ < 0) throw DataError("spending profile: period index must be >= 0");
  if (shares_.empty()) throw DimensionError("spending profile: no share entries");
  double total = 0.0;
  for (double s : shares_) {
    if (!std::isfinite(s) || s < 0.0)
      throw DataError("spending profile: shares must be finite and >= 0");
    total += s;
  }
  if (total <= 0.0) throw DataError("spending profile: shares sum to zero");
  for (double& s : shares_) s /= total;
}

void CoefficientMatrix::validate() const {
  if (values.cols() != kNumTraits)
    throw DimensionError("coefficient matrix: expected 5 trait columns");
  if (class_names.size() != values.rows())
    throw DimensionError("coefficient matrix: class name count differs from row count");
  for (double v : values.data())
    if (!std::isfinite(v)) throw DataError("coefficient matrix: non-finite entry");
}

std::vector<bool> CoefficientMatrix::nonzero_rows(double threshold_factor) const {
  const auto& d = values.data();
  double mean_abs = 0.0;
  for (double v : d) mean_abs += std::abs(v);
  if (!d.empty()) mean_abs /= static_cast<double>(d.size());
  const double threshold = threshold_factor * mean_abs;

  std::vector<bool> out(values.rows(), false);
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      if (std::abs(values(i, j)) >= threshold && std::abs(values(i, j)) > 0.0) {
        out[i] = true;
        break;
      }
    }
  }
  return out;
}

std::size_t CoefficientMatrix::nonzero_row_count(double threshold_factor) const {
  const auto rows = nonzero_rows(threshold_factor);
  return static_cast<std::size_t>(std::count(rows.begin(), rows.end(), true));
}

std::string DominantOrder::initials() const {
  std::string out;
  for (std::size_t r = 0; r < kNumTraits; ++r) {
    if (r > 0) out.push_back('>');
    out.push_back(kTraitInitials[static_cast<std::size_t>(order[r])]);
  }
  return out;
}

DominantOrder DominantOrder::parse_initials(const std::string& text) {
  DominantOrder out;
  std::array<bool, kNumTraits> seen{};
  std::size_t rank = 0;
  for (std::size_t pos = 0; pos < text.size(); pos += 2) {
    if (rank >= kNumTraits) throw SchemaError("dominant order: too many traits in '" + text + "'");
    if (pos > 0 && text[pos - 1] != '>')
      throw SchemaError("dominant order: expected '>' separators in '" + text + "'");
    const char c = text[pos];
    const auto it = std::find(kTraitInitials.begin(), kTraitInitials.end(), c);
    if (it == kTraitInitials.end())
      throw SchemaError("dominant order: unknown trait initial in '" + text + "'");
    const int idx = static_cast<int>(it - kTraitInitials.begin());
    if (seen[static_cast<std::size_t>(idx)])
      throw SchemaError("dominant order: repeated trait in '" + text + "'");
    seen[static_cast<std::size_t>(idx)] = true;
    out.order[rank++] = idx;
  }
  if (rank != kNumTraits) throw SchemaError("dominant order: expected 5 traits in '" + text + "'");
  return out;
}

TraitVector ScalingBounds::scale(const std::array<double, kNumTraits>& raw) const {
  TraitVector out;
  for (std::size_t t = 0; t < kNumTraits; ++t) {
    const double range = max[t] - min[t];
    if (range > 0.0) {
      out.grades[t] = std::clamp((raw[t] - min[t]) / range, 0.0, 1.0);
    } else {
      out.grades[t] = 0.5;
    }
  }
  return out;
}

std::array<double, kNumTraits> score_traits(const SpendingProfile& profile,
                                            const CoefficientMatrix& coeffs) {
  if (profile.k() != coeffs.k())
    throw DimensionError("score_traits: profile has " + std::to_string(profile.k()) +
                         " classes, coefficients have " + std::to_string(coeffs.k()));
  std::array<double, kNumTraits> out{};
  const auto& shares = profile.shares();
  for (std::size_t k = 0; k < shares.size(); ++k) {
    const double s = shares[k];
    if (s == 0.0) continue;
    const double* row = coeffs.values.row(k);
    for (std::size_t t = 0; t < kNumTraits; ++t) out[t] += s * row[t];
  }
  return out;
}

std::pair<std::vector<TraitVector>, ScalingBounds> scale_population(const Matrix& raw_scores) {
  const std::size_t n = raw_scores.rows();
  if (n == 0) throw EmptyDatasetError("scale_population: empty score matrix");
  if (n < 2) throw EmptyDatasetError("scale_population: population must have at least 2 rows");
  if (raw_scores.cols() != kNumTraits)
    throw DimensionError("scale_population: expected 5 trait columns");

  ScalingBounds bounds;
  for (std::size_t t = 0; t < kNumTraits; ++t) {
    double lo = raw_scores(0, t), hi = raw_scores(0, t);
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, raw_scores(i, t));
      hi = std::max(hi, raw_scores(i, t));
    }
    bounds.min[t] = lo;
    bounds.max[t] = hi;
  }

  std::vector<TraitVector> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, kNumTraits> raw;
    for (std::size_t t = 0; t < kNumTraits; ++t) raw[t] = raw_scores(i, t);
    scaled[i] = bounds.scale(raw);
  }
  return {std::move(scaled), bounds};
}

DominantOrder dominant_order(const TraitVector& traits) {
  for (double g : traits.grades)
    if (!std::isfinite(g)) throw InvalidTraitError("dominant_order: non-finite grade");
  DominantOrder out;
  std::array<int, kNumTraits> idx;
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double ga = traits.grades[static_cast<std::size_t>(a)];
    const double gb = traits.grades[static_cast<std::size_t>(b)];
    if (ga != gb) return ga > gb;
    return a < b;
  });
  out.order = idx;
  return out;
}

}  // namespace microseg::domain
