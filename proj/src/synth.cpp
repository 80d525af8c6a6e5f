#include "microseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "microseg/errors.hpp"
#include "microseg/rng.hpp"

namespace microseg::synth {
namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Keeps the class-space activation inside softplus's smooth region so share
// variation stays close to linear in the latent intensities.
constexpr double kActivationScale = 0.35;
constexpr double kTasteScale = 2.0;

std::string customer_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "C%06zu", i);
  return buf;
}

// Class-space activation for one latent trait-intensity vector; normalized
// to the simplex by the caller via SpendingProfile.
std::vector<double> base_shares(const domain::CoefficientMatrix& coeffs,
                                const std::vector<double>& baseline,
                                const std::vector<double>& idio_noise,
                                const std::array<double, domain::kNumTraits>& latent,
                                double signal) {
  const std::size_t k = coeffs.k();
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double* row = coeffs.values.row(c);
    double drive = 0.0;
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) drive += row[t] * latent[t];
    out[c] = softplus(kActivationScale * (baseline[c] + signal * drive + idio_noise[c]));
  }
  return out;
}

std::array<double, domain::kNumTraits> draw_latent(rng::Stream& stream, int dominant) {
  // Dominant component pinned at 1; the remaining traits get rank-ordered
  // intensities with clear gaps so the 2nd/3rd/4th dominance levels carry
  // real structure for the hierarchy analytics.
  static constexpr std::array<double, 4> rank_base = {0.30, 0.18, 0.08, 0.025};
  std::array<int, domain::kNumTraits - 1> others{};
  int filled = 0;
  for (int t = 0; t < static_cast<int>(domain::kNumTraits); ++t)
    if (t != dominant) others[static_cast<std::size_t>(filled++)] = t;
  for (std::size_t i = others.size() - 1; i > 0; --i)
    std::swap(others[i], others[stream.uniform_int(i + 1)]);

  std::array<double, domain::kNumTraits> latent{};
  latent[static_cast<std::size_t>(dominant)] = 1.0;
  for (std::size_t r = 0; r < others.size(); ++r)
    latent[static_cast<std::size_t>(others[r])] = rank_base[r] + stream.uniform(0.0, 0.06);
  return latent;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_customers < 1) throw ConfigError("synth config: n_customers must be >= 1");
  if (n_periods < 2) throw ConfigError("synth config: n_periods must be >= 2");
  if (k_classes < domain::kNumTraits) throw ConfigError("synth config: k_classes must be >= 5");
  if (n_nonzero_rows > k_classes)
    throw ConfigError("synth config: n_nonzero_rows exceeds k_classes");
  if (trait_signal_strength < 0.0) throw ConfigError("synth config: signal strength must be >= 0");
  if (noise_scale < 0.0) throw ConfigError("synth config: noise scale must be >= 0");
  if (regime_switch_fraction < 0.0 || regime_switch_fraction > 1.0)
    throw ConfigError("synth config: regime_switch_fraction must be in [0, 1]");
}

std::vector<double> CustomerRecord::mean_shares() const {
  std::vector<double> mean(profiles.front().k(), 0.0);
  for (const auto& p : profiles)
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p.shares()[c];
  const double inv = 1.0 / static_cast<double>(profiles.size());
  for (double& v : mean) v *= inv;
  return mean;
}

Matrix CustomerRecord::windowed_inputs(std::size_t window) const {
  if (window < 1) throw ConfigError("windowed_inputs: window must be >= 1");
  const std::size_t t_count = profiles.size();
  if (window > t_count) throw ConfigError("windowed_inputs: window exceeds period count");
  const std::size_t k = profiles.front().k();
  Matrix out(t_count, k);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::size_t first = (t + 1 >= window) ? t + 1 - window : 0;
    const double inv = 1.0 / static_cast<double>(t - first + 1);
    for (std::size_t p = first; p <= t; ++p) {
      const auto& shares = profiles[p].shares();
      for (std::size_t c = 0; c < k; ++c) out(t, c) += shares[c] * inv;
    }
  }
  return out;
}

std::size_t Dataset::n_switched() const {
  return static_cast<std::size_t>(
      std::count_if(customers.begin(), customers.end(),
                    [](const CustomerRecord& c) { return c.regime_switch; }));
}

domain::CoefficientMatrix generate_coefficients(std::size_t k_classes, std::size_t n_nonzero_rows,
                                                std::uint64_t seed) {
  if (n_nonzero_rows > k_classes)
    throw ConfigError("generate_coefficients: n_nonzero_rows exceeds k_classes");
  rng::Stream stream(seed);

  std::vector<std::size_t> rows(k_classes);
  std::iota(rows.begin(), rows.end(), 0);
  stream.shuffle(rows);

  domain::CoefficientMatrix out;
  out.values = Matrix(k_classes, domain::kNumTraits);
  out.class_names.resize(k_classes);
  for (std::size_t c = 0; c < k_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02zu", c);
    out.class_names[c] = buf;
  }
  for (std::size_t r = 0; r < n_nonzero_rows; ++r)
    for (std::size_t t = 0; t < domain::kNumTraits; ++t)
      out.values(rows[r], t) = stream.normal();
  return out;
}

Dataset generate_population(const SynthConfig& config, const domain::CoefficientMatrix& coeffs) {
  config.validate();
  coeffs.validate();
  if (coeffs.k() != config.k_classes)
    throw DimensionError("generate_population: coefficient rows differ from k_classes");

  const std::size_t n = config.n_customers;
  const std::size_t t_count = config.n_periods;
  const std::size_t k = config.k_classes;

  rng::Stream stream(rng::derive(config.seed, rng::StreamId::population));

  // Shared baseline spend level per class, drawn once per population.
  std::vector<double> baseline(k);
  for (double& b : baseline) b = stream.normal();


  Dataset ds;
  ds.config = config;
  ds.coefficients = coeffs;
  ds.customers.resize(n);

  Matrix label_raw(n, domain::kNumTraits);
  std::vector<Matrix> period_raw(n);

  for (std::size_t i = 0; i < n; ++i) {
    CustomerRecord& rec = ds.customers[i];
    rec.customer_id = customer_name(i);

    const int dominant = static_cast<int>(stream.uniform_int(domain::kNumTraits));
    rec.intended_dominant = dominant;
    auto latent = draw_latent(stream, dominant);

    // Unit-scale idiosyncratic taste per class, drawn once per customer:
    // every class carries broad cross-customer variation, personality-linked
    // or not, the way real spending does.
    std::vector<double> idio(k);
    for (double& v : idio) v = kTasteScale * stream.normal();

    const bool switched = stream.uniform() < config.regime_switch_fraction;
    int switch_period = -1;
    std::array<double, domain::kNumTraits> latent_post = latent;
    if (switched) {
      switch_period =
          1 + static_cast<int>(stream.uniform_int(static_cast<std::uint64_t>(t_count - 1)));
      int new_dominant = dominant;
      while (new_dominant == dominant)
        new_dominant = static_cast<int>(stream.uniform_int(domain::kNumTraits));
      rec.intended_dominant_post = new_dominant;
      latent_post = draw_latent(stream, new_dominant);
    }
    rec.regime_switch = switched;
    rec.switch_period = switch_period;

    const auto base_pre =
        base_shares(coeffs, baseline, idio, latent, config.trait_signal_strength);
    const auto base_post =
        switched ? base_shares(coeffs, baseline, idio, latent_post, config.trait_signal_strength)
                 : base_pre;

    rec.profiles.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      const auto& base = (switched && static_cast<int>(t) >= switch_period) ? base_post : base_pre;
      std::vector<double> shares(k);
      for (std::size_t c = 0; c < k; ++c) {
        // Relative per-period jitter, clipped at zero before normalization.
        const double v = base[c] * (1.0 + config.noise_scale * stream.normal());
        shares[c] = std::max(0.0, v);
      }
      rec.profiles.emplace_back(rec.customer_id, static_cast<int>(t), std::move(shares));
    }

    const auto mean = rec.mean_shares();
    const auto raw =
        domain::score_traits(domain::SpendingProfile(rec.customer_id, 0, mean), coeffs);
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) label_raw(i, t) = raw[t];

    period_raw[i] = Matrix(t_count, domain::kNumTraits);
    for (std::size_t t = 0; t < t_count; ++t) {
      const auto r = domain::score_traits(rec.profiles[t], coeffs);
      for (std::size_t j = 0; j < domain::kNumTraits; ++j) period_raw[i](t, j) = r[j];
    }
  }

  if (n >= 2) {
    auto [labels, bounds] = domain::scale_population(label_raw);
    ds.scaling = bounds;
    for (std::size_t i = 0; i < n; ++i) {
      ds.customers[i].label = labels[i];
      ds.customers[i].label_order = domain::dominant_order(labels[i]);
    }
  } else {
    // Single-customer population: degenerate bounds, all grades 0.5.
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) {
      ds.scaling.min[t] = label_raw(0, t);
      ds.scaling.max[t] = label_raw(0, t);
    }
    std::array<double, domain::kNumTraits> raw;
    for (std::size_t t = 0; t < domain::kNumTraits; ++t) raw[t] = label_raw(0, t);
    ds.customers[0].label = ds.scaling.scale(raw);
    ds.customers[0].label_order = domain::dominant_order(ds.customers[0].label);
  }

  for (std::size_t i = 0; i < n; ++i) {
    CustomerRecord& rec = ds.customers[i];
    rec.period_traits.resize(t_count);
    rec.period_orders.resize(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      std::array<double, domain::kNumTraits> raw;
      for (std::size_t j = 0; j < domain::kNumTraits; ++j) raw[j] = period_raw[i](t, j);
      rec.period_traits[t] = ds.scaling.scale(raw);
      rec.period_orders[t] = domain::dominant_order(rec.period_traits[t]);
    }
  }
  return ds;
}

Dataset generate_population(const SynthConfig& config) {
  const auto coeffs = generate_coefficients(
      config.k_classes, config.n_nonzero_rows, rng::derive(config.seed, rng::StreamId::coefficients));
  return generate_population(config, coeffs);
}

std::vector<domain::SpendingProfile> aggregate_transactions(
    const std::vector<RawTransaction>& rows, std::size_t window_periods, std::size_t k_classes) {
  if (window_periods < 1) throw ConfigError("aggregate_transactions: window must be >= 1");
  if (rows.empty()) throw EmptyDatasetError("aggregate_transactions: no transactions");

  long max_bucket = 0;
  for (const auto& r : rows) {
    if (r.bucket < 0) throw SchemaError("aggregate_transactions: negative bucket");
    if (r.class_id >= k_classes)
      throw SchemaError("aggregate_transactions: unknown class_id " + std::to_string(r.class_id));
    if (!(r.amount >= 0.0))
      throw SchemaError("aggregate_transactions: negative amount for " + r.customer_id);
    max_bucket = std::max(max_bucket, r.bucket);
  }
  const std::size_t bucket_count = static_cast<std::size_t>(max_bucket) + 1;
  if (bucket_count % window_periods != 0)
    throw ConfigError("aggregate_transactions: window does not divide bucket count " +
                      std::to_string(bucket_count));
  const std::size_t n_windows = bucket_count / window_periods;

  // customer -> window -> per-class sums
  std::map<std::string, std::vector<std::vector<double>>> sums;
  for (const auto& r : rows) {
    auto& windows = sums[r.customer_id];
    if (windows.empty()) windows.assign(n_windows, std::vector<double>(k_classes, 0.0));
    const std::size_t w = static_cast<std::size_t>(r.bucket) / window_periods;
    windows[w][r.class_id] += r.amount;
  }

  std::vector<domain::SpendingProfile> out;
  out.reserve(sums.size() * n_windows);
  for (auto& [customer, windows] : sums) {
    for (std::size_t w = 0; w < n_windows; ++w) {
      const double total = std::accumulate(windows[w].begin(), windows[w].end(), 0.0);
      if (total <= 0.0)
        throw EmptyWindowError("aggregate_transactions: window " + std::to_string(w) +
                               " has zero total for " + customer);
      out.emplace_back(customer, static_cast<int>(w), std::move(windows[w]));
    }
  }
  return out;
}

}  // namespace microseg::synth
