#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "microseg/domain.hpp"
#include "microseg/rnn.hpp"
#include "microseg/surrogate.hpp"
#include "microseg/synth.hpp"

namespace microseg::segmentation {

// Node of the trait-ordered hierarchy. The key is a prefix of a dominant
// order, e.g. {4} or {4, 1}; children partition the parent's members by the
// next-most-dominant trait.
struct ClusterNode {
  std::vector<int> prefix;
  std::vector<std::size_t> members;  // indices into the input arrays
  surrogate::DirectionAngles centroid;  // circular mean theta, arithmetic phi
  // Geometric purity of the members' angles against the next-rank trait
  // labels, with its permutation null. NaN when not computed (leaf depth or
  // too few members / labels).
  double purity = std::numeric_limits<double>::quiet_NaN();
  double null_purity = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_child_labels = 0;

  std::string key_initials() const;  // e.g. "N>C"
};

struct ClusterTree {
  std::size_t depth = 0;
  std::vector<ClusterNode> nodes;  // depth-1 first, then depth-2, ... ; each
                                   // level sorted by prefix

  std::vector<const ClusterNode*> level(std::size_t d) const;  // d = 1..depth
  const ClusterNode* find(const std::vector<int>& prefix) const;
};

struct PurityOptions {
  std::uint64_t seed = 42;
  std::size_t restarts = 20;
  std::size_t null_permutations = 20;
  std::size_t min_members = 10;  // skip purity stats below this size
};

// Label-driven grouping by dominant-order prefixes up to `depth` (1..4).
// When opts is given, per-node k-means purity against the next-rank labels
// and its permutation null are filled in.
ClusterTree build_hierarchy(const std::vector<surrogate::DirectionAngles>& angles,
                            const std::vector<domain::DominantOrder>& orders, std::size_t depth,
                            const PurityOptions* opts = nullptr);

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centers;  // k x 2
  double inertia = 0.0;
};

// Seeded k-means (k-means++ init, `restarts` restarts, Euclidean) on 2-D
// points.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t restarts,
                    std::uint64_t seed);

// Sum over clusters of the modal label count, divided by N.
double purity(const std::vector<int>& assignment, std::size_t k, const std::vector<int>& labels);

// k-means purity of angle points against labels. Azimuths are rotated by the
// largest-gap offset before the Euclidean clustering.
double geometric_purity(const std::vector<surrogate::DirectionAngles>& angles,
                        const std::vector<int>& labels, std::size_t k, std::uint64_t seed,
                        std::size_t restarts = 20);

// Mean purity of the same clustering against label permutations.
double permutation_null_purity(const std::vector<int>& assignment, std::size_t k,
                               const std::vector<int>& labels, std::size_t n_permutations,
                               std::uint64_t seed);

struct StabilityRecord {
  std::string customer_id;
  int coarse_cluster = -1;  // depth-1 trait index of the nearest centroid
  int fine_cluster = -1;
  double divergence_rad = 0.0;  // angle between the two direction vectors
  bool degenerate = false;
  bool regime_switch = false;
};

struct StabilityReport {
  double agreement_rate = 0.0;             // over non-degenerate customers
  double agreement_rate_stationary = 0.0;  // restricted to non-switch customers
  double mean_divergence_rad = 0.0;
  std::size_t n_degenerate = 0;
  std::size_t coarse_window = 0;
  std::size_t fine_window = 0;
  std::vector<StabilityRecord> records;
};

// Extracts trajectories under two aggregation windows (trailing means over
// `coarse` and `fine` periods), assigns both direction-angle points of each
// customer to the nearest depth-1 centroid of the coarse hierarchy, and
// reports the agreement rate plus per-customer angular divergence.
StabilityReport stability_check(const rnn::LstmModel& model, const synth::Dataset& dataset,
                                std::size_t coarse_window, std::size_t fine_window);

struct CourseChange {
  int period = 0;      // 0-based period whose input drove the new direction
  double angle = 0.0;  // turning angle at that junction
};

// Earliest junction where the angle between successive trajectory steps
// exceeds `threshold`. Zero-length steps are skipped; `skipped_steps` counts
// them when provided. Requires at least 3 points.
std::optional<CourseChange> detect_course_change(const rnn::Trajectory& trajectory,
                                                 double threshold,
                                                 std::size_t* skipped_steps = nullptr);

}  // namespace microseg::segmentation
