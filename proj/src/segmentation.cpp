#include "microseg/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "microseg/errors.hpp"
#include "microseg/rng.hpp"

namespace microseg::segmentation {
namespace {

surrogate::DirectionAngles centroid_of(const std::vector<surrogate::DirectionAngles>& angles,
                                       const std::vector<std::size_t>& members) {
  double s = 0.0, c = 0.0, phi = 0.0;
  for (std::size_t i : members) {
    s += std::sin(angles[i].theta);
    c += std::cos(angles[i].theta);
    phi += angles[i].phi;
  }
  surrogate::DirectionAngles out;
  out.theta = (s == 0.0 && c == 0.0) ? 0.0 : std::atan2(s, c);
  out.phi = phi / static_cast<double>(members.size());
  return out;
}

// Squared distance in angle space with the azimuth difference wrapped.
double angle_dist2(const surrogate::DirectionAngles& a, const surrogate::DirectionAngles& b) {
  const double dt = surrogate::wrap_angle(a.theta - b.theta);
  const double dp = a.phi - b.phi;
  return dt * dt + dp * dp;
}

double lloyd_pass(const Matrix& points, Matrix& centers, std::vector<int>& assignment) {
  const std::size_t n = points.rows();
  const std::size_t k = centers.rows();
  double inertia = 0.0;
  bool moved = true;
  std::vector<double> sum_x(k), sum_y(k);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < 100 && moved; ++iter) {
    moved = false;
    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dx = points(i, 0) - centers(c, 0);
        const double dy = points(i, 1) - centers(c, 1);
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        moved = true;
      }
      inertia += best_d;
    }
    std::fill(sum_x.begin(), sum_x.end(), 0.0);
    std::fill(sum_y.begin(), sum_y.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assignment[i]);
      sum_x[c] += points(i, 0);
      sum_y[c] += points(i, 1);
      ++counts[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty clusters keep their center
      centers(c, 0) = sum_x[c] / static_cast<double>(counts[c]);
      centers(c, 1) = sum_y[c] / static_cast<double>(counts[c]);
    }
  }
  return inertia;
}

}  // namespace

std::string ClusterNode::key_initials() const {
  std::string out;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i > 0) out.push_back('>');
    out.push_back(domain::kTraitInitials[static_cast<std::size_t>(prefix[i])]);
  }
  return out;
}

std::vector<const ClusterNode*> ClusterTree::level(std::size_t d) const {
  std::vector<const ClusterNode*> out;
  for (const auto& node : nodes)
    if (node.prefix.size() == d) out.push_back(&node);
  return out;
}

const ClusterNode* ClusterTree::find(const std::vector<int>& prefix) const {
  for (const auto& node : nodes)
    if (node.prefix == prefix) return &node;
  return nullptr;
}

ClusterTree build_hierarchy(const std::vector<surrogate::DirectionAngles>& angles,
                            const std::vector<domain::DominantOrder>& orders, std::size_t depth,
                            const PurityOptions* opts) {
  if (depth < 1 || depth > 4) throw ConfigError("build_hierarchy: depth must be in [1, 4]");
  if (angles.size() != orders.size())
    throw DimensionError("build_hierarchy: angle and order counts differ");

  ClusterTree tree;
  tree.depth = depth;

  for (std::size_t d = 1; d <= depth; ++d) {
    // Group by the length-d prefix of each customer's dominant order.
    std::map<std::vector<int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < orders.size(); ++i) {
      std::vector<int> prefix(d);
      for (std::size_t r = 0; r < d; ++r) prefix[r] = orders[i].at_rank(r);
      groups[prefix].push_back(i);
    }
    for (auto& [prefix, members] : groups) {
      ClusterNode node;
      node.prefix = prefix;
      node.members = std::move(members);
      node.centroid = centroid_of(angles, node.members);

      if (opts != nullptr && d < domain::kNumTraits - 1 && d < depth &&
          node.members.size() >= opts->min_members) {
        std::vector<int> child_labels;
        child_labels.reserve(node.members.size());
        std::vector<surrogate::DirectionAngles> member_angles;
        member_angles.reserve(node.members.size());
        for (std::size_t i : node.members) {
          child_labels.push_back(orders[i].at_rank(d));
          member_angles.push_back(angles[i]);
        }
        std::vector<int> distinct = child_labels;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        node.n_child_labels = distinct.size();
        if (distinct.size() >= 2 && node.members.size() >= distinct.size()) {
          std::uint64_t key = d;
          for (int p : node.prefix) key = key * 131 + static_cast<std::uint64_t>(p) + 1;
          const std::uint64_t node_seed = rng::splitmix64(opts->seed + key);
          // Match k to the observed child labels.
          std::vector<surrogate::DirectionAngles> rotated = member_angles;
          const double rho = surrogate::azimuth_rotation(member_angles);
          Matrix pts(rotated.size(), 2);
          for (std::size_t i = 0; i < rotated.size(); ++i) {
            pts(i, 0) = surrogate::wrap_angle(member_angles[i].theta - rho);
            pts(i, 1) = member_angles[i].phi;
          }
          const auto km = kmeans(pts, distinct.size(), opts->restarts, node_seed);
          node.purity = purity(km.assignment, distinct.size(), child_labels);
          node.null_purity = permutation_null_purity(km.assignment, distinct.size(), child_labels,
                                                     opts->null_permutations, node_seed + 1);
        }
      }
      tree.nodes.push_back(std::move(node));
    }
  }
  return tree;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t restarts,
                    std::uint64_t seed) {
  const std::size_t n = points.rows();
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (n < k) throw ConfigError("kmeans: fewer points than clusters");

  rng::Stream stream(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();

  std::vector<double> dist2(n);
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    // k-means++ seeding.
    Matrix centers(k, 2);
    std::size_t first = static_cast<std::size_t>(stream.uniform_int(n));
    centers(0, 0) = points(first, 0);
    centers(0, 1) = points(first, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = points(i, 0) - centers(0, 0);
      const double dy = points(i, 1) - centers(0, 1);
      dist2[i] = dx * dx + dy * dy;
    }
    for (std::size_t c = 1; c < k; ++c) {
      const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
      std::size_t pick = 0;
      if (total > 0.0) {
        double target = stream.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
          target -= dist2[i];
          if (target <= 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(stream.uniform_int(n));
      }
      centers(c, 0) = points(pick, 0);
      centers(c, 1) = points(pick, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = points(i, 0) - centers(c, 0);
        const double dy = points(i, 1) - centers(c, 1);
        dist2[i] = std::min(dist2[i], dx * dx + dy * dy);
      }
    }

    std::vector<int> assignment(n, -1);
    const double inertia = lloyd_pass(points, centers, assignment);
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.centers = centers;
      best.assignment = assignment;
    }
  }
  return best;
}

double purity(const std::vector<int>& assignment, std::size_t k, const std::vector<int>& labels) {
  if (assignment.size() != labels.size())
    throw DimensionError("purity: assignment and label counts differ");
  if (assignment.empty()) throw EmptyDatasetError("purity: empty input");
  // cluster -> label -> count
  std::vector<std::map<int, std::size_t>> counts(k);
  for (std::size_t i = 0; i < assignment.size(); ++i)
    ++counts[static_cast<std::size_t>(assignment[i])][labels[i]];
  std::size_t modal_total = 0;
  for (const auto& cluster : counts) {
    std::size_t modal = 0;
    for (const auto& [label, count] : cluster) modal = std::max(modal, count);
    modal_total += modal;
  }
  return static_cast<double>(modal_total) / static_cast<double>(assignment.size());
}

double geometric_purity(const std::vector<surrogate::DirectionAngles>& angles,
                        const std::vector<int>& labels, std::size_t k, std::uint64_t seed,
                        std::size_t restarts) {
  if (angles.size() != labels.size())
    throw DimensionError("geometric_purity: angle and label counts differ");
  if (k < 1) throw ConfigError("geometric_purity: k must be >= 1");
  if (angles.size() < k) throw ConfigError("geometric_purity: fewer points than clusters");

  const double rho = surrogate::azimuth_rotation(angles);
  Matrix pts(angles.size(), 2);
  for (std::size_t i = 0; i < angles.size(); ++i) {
    pts(i, 0) = surrogate::wrap_angle(angles[i].theta - rho);
    pts(i, 1) = angles[i].phi;
  }
  const auto km = kmeans(pts, k, restarts, seed);
  return purity(km.assignment, k, labels);
}

double permutation_null_purity(const std::vector<int>& assignment, std::size_t k,
                               const std::vector<int>& labels, std::size_t n_permutations,
                               std::uint64_t seed) {
  if (n_permutations == 0) throw ConfigError("permutation_null_purity: need >= 1 permutation");
  rng::Stream stream(seed);
  std::vector<int> shuffled = labels;
  double total = 0.0;
  for (std::size_t p = 0; p < n_permutations; ++p) {
    stream.shuffle(shuffled);
    total += purity(assignment, k, shuffled);
  }
  return total / static_cast<double>(n_permutations);
}

StabilityReport stability_check(const rnn::LstmModel& model, const synth::Dataset& dataset,
                                std::size_t coarse_window, std::size_t fine_window) {
  const std::size_t t_count = dataset.periods();
  if (coarse_window < 1 || coarse_window > t_count || fine_window < 1 || fine_window > t_count)
    throw ConfigError("stability_check: windows must be in [1, n_periods]");

  const auto coarse = rnn::extract_trajectories(model, dataset, coarse_window);
  const auto fine = rnn::extract_trajectories(model, dataset, fine_window);

  StabilityReport report;
  report.coarse_window = coarse_window;
  report.fine_window = fine_window;

  // Depth-1 centroids from the coarse-window hierarchy.
  std::vector<surrogate::DirectionAngles> coarse_angles(dataset.customers.size());
  std::vector<bool> coarse_ok(dataset.customers.size(), false);
  for (std::size_t i = 0; i < dataset.customers.size(); ++i) {
    try {
      coarse_angles[i] = surrogate::trajectory_angles(coarse[i]);
      coarse_ok[i] = true;
    } catch (const DegenerateTrajectoryError&) {
    }
  }
  std::vector<surrogate::DirectionAngles> ok_angles;
  std::vector<domain::DominantOrder> ok_orders;
  for (std::size_t i = 0; i < dataset.customers.size(); ++i) {
    if (!coarse_ok[i]) continue;
    ok_angles.push_back(coarse_angles[i]);
    ok_orders.push_back(dataset.customers[i].label_order);
  }
  if (ok_angles.empty()) throw EmptyDatasetError("stability_check: all trajectories degenerate");
  const auto tree = build_hierarchy(ok_angles, ok_orders, 1);
  const auto level1 = tree.level(1);

  auto nearest = [&](const surrogate::DirectionAngles& a) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto* node : level1) {
      const double d = angle_dist2(a, node->centroid);
      if (d < best_d) {
        best_d = d;
        best = node->prefix[0];
      }
    }
    return best;
  };

  std::size_t agree = 0, n_valid = 0, agree_stationary = 0, n_stationary = 0;
  double divergence_total = 0.0;
  for (std::size_t i = 0; i < dataset.customers.size(); ++i) {
    StabilityRecord rec;
    rec.customer_id = dataset.customers[i].customer_id;
    rec.regime_switch = dataset.customers[i].regime_switch;
    try {
      const auto d_coarse = surrogate::direction_vector(coarse[i]);
      const auto d_fine = surrogate::direction_vector(fine[i]);
      const auto a_coarse = surrogate::vector_angles(d_coarse);
      const auto a_fine = surrogate::vector_angles(d_fine);
      rec.coarse_cluster = nearest(a_coarse);
      rec.fine_cluster = nearest(a_fine);
      const double nc = std::sqrt(d_coarse[0] * d_coarse[0] + d_coarse[1] * d_coarse[1] +
                                  d_coarse[2] * d_coarse[2]);
      const double nf =
          std::sqrt(d_fine[0] * d_fine[0] + d_fine[1] * d_fine[1] + d_fine[2] * d_fine[2]);
      // 2 asin(|u - v| / 2) is accurate near zero; identical directions give
      // exactly zero divergence.
      double chord = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        const double diff = d_coarse[j] / nc - d_fine[j] / nf;
        chord += diff * diff;
      }
      rec.divergence_rad = 2.0 * std::asin(std::clamp(0.5 * std::sqrt(chord), 0.0, 1.0));
    } catch (const DegenerateTrajectoryError&) {
      rec.degenerate = true;
      ++report.n_degenerate;
      report.records.push_back(rec);
      continue;
    }
    ++n_valid;
    divergence_total += rec.divergence_rad;
    const bool same = rec.coarse_cluster == rec.fine_cluster;
    if (same) ++agree;
    if (!rec.regime_switch) {
      ++n_stationary;
      if (same) ++agree_stationary;
    }
    report.records.push_back(rec);
  }
  report.agreement_rate = n_valid > 0 ? static_cast<double>(agree) / static_cast<double>(n_valid) : 0.0;
  report.agreement_rate_stationary =
      n_stationary > 0 ? static_cast<double>(agree_stationary) / static_cast<double>(n_stationary)
                       : report.agreement_rate;
  report.mean_divergence_rad = n_valid > 0 ? divergence_total / static_cast<double>(n_valid) : 0.0;
  return report;
}

std::optional<CourseChange> detect_course_change(const rnn::Trajectory& trajectory,
                                                 double threshold, std::size_t* skipped_steps) {
  const std::size_t t_count = trajectory.points.size();
  if (t_count < 3) throw DimensionError("detect_course_change: need at least 3 points");
  if (!(threshold > 0.0)) throw ConfigError("detect_course_change: threshold must be > 0");
  if (skipped_steps != nullptr) *skipped_steps = 0;

  constexpr double kZeroStep = 1e-12;
  std::array<double, 3> prev{};
  double prev_norm = 0.0;
  int prev_step = -1;  // step index of the last non-degenerate move
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    std::array<double, 3> step;
    for (std::size_t j = 0; j < 3; ++j) step[j] = trajectory.points[t + 1][j] - trajectory.points[t][j];
    const double norm = std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
    if (norm < kZeroStep) {
      if (skipped_steps != nullptr) ++(*skipped_steps);
      continue;
    }
    if (prev_step >= 0) {
      const double dot = (prev[0] * step[0] + prev[1] * step[1] + prev[2] * step[2]) /
                         (prev_norm * norm);
      const double angle = std::acos(std::clamp(dot, -1.0, 1.0));
      if (angle > threshold) {
        // Step t runs from point t to t+1 and consumes the period-(t+1) input.
        CourseChange change;
        change.period = static_cast<int>(t) + 1;
        change.angle = angle;
        return change;
      }
    }
    prev = step;
    prev_norm = norm;
    prev_step = static_cast<int>(t);
  }
  return std::nullopt;
}

}  // namespace microseg::segmentation
