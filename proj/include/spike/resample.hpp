#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spike/detail/random.hpp"
#include "spike/error.hpp"
#include "spike/features.hpp"

namespace spike {

struct SmoteConfig {
  int k = 5;
  int percent = 50;
  double spike_threshold_ms = 470.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw Error("smote: k must be >= 1");
    if (percent <= 0) throw Error("smote: percent must be > 0");
  }
};

/// Where a synthetic row came from: indices into the input dataset.
struct SyntheticOrigin {
  std::size_t parent = 0;
  std::size_t neighbor = 0;
  double gap = 0.0;
};

struct SmoteResult {
  Dataset data;
  std::vector<SyntheticOrigin> origins;  // one per appended row, in order
  int k_used = 0;
  std::vector<std::string> warnings;
};

namespace detail {

// Indices of the k nearest minority rows to minority[self] (Euclidean over
// `points`), nearest first, ties by lower dataset index.
inline std::vector<std::size_t> nearest_minority(const std::vector<std::vector<double>>& points,
                                                 const std::vector<std::size_t>& minority, std::size_t self,
                                                 std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(minority.size() - 1);
  const auto& p = points[minority[self]];
  for (std::size_t j = 0; j < minority.size(); ++j) {
    if (j == self) continue;
    const auto& q = points[minority[j]];
    double s = 0.0;
    for (std::size_t f = 0; f < p.size(); ++f) s += (p[f] - q[f]) * (p[f] - q[f]);
    d.emplace_back(s, minority[j]);
  }
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back(d[j].second);
  return out;
}

}  // namespace detail

/// SMOTE over the rows whose label exceeds the spike threshold.
///
/// Appends ceil(percent/100 * m) rows. Parents are visited round-robin over
/// a shuffled minority list; each synthetic row is p + g (q - p) in joint
/// feature+label space with q drawn from p's k nearest minority neighbours.
/// Distances use min-max scaled features: the dataset's own values when it
/// is already normalized, otherwise a scaled copy. Min-max scaling is affine
/// per feature, so interpolating in the dataset's own space gives the same
/// points.
///
/// `gap` draws g in (0,1); the default uses the seeded generator.
template <class GapFn>
SmoteResult smote_with_origins(const Dataset& ds, const SmoteConfig& cfg, GapFn&& gap) {
  cfg.validate();
  std::vector<std::size_t> minority;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.examples[i].y > cfg.spike_threshold_ms) minority.push_back(i);
  const std::size_t m = minority.size();
  if (m < 2)
    throw InsufficientMinority("smote: need at least 2 examples above " +
                               detail::format_number(cfg.spike_threshold_ms) + " ms, found " + std::to_string(m));

  SmoteResult res;
  res.k_used = cfg.k;
  if (static_cast<std::size_t>(cfg.k) >= m) {
    res.k_used = static_cast<int>(m - 1);
    res.warnings.push_back("smote: k=" + std::to_string(cfg.k) + " clamped to " + std::to_string(res.k_used) +
                           " (only " + std::to_string(m) + " minority examples)");
  }

  std::vector<std::vector<double>> points;
  points.reserve(ds.size());
  if (ds.normalization) {
    for (const auto& ex : ds.examples) points.push_back(ex.x);
  } else {
    const auto stats = fit_normalization(ds);
    for (const auto& ex : ds.examples) points.push_back(stats.apply(ex.x));
  }

  std::vector<std::vector<std::size_t>> neighbors(m);
  for (std::size_t j = 0; j < m; ++j)
    neighbors[j] = detail::nearest_minority(points, minority, j, static_cast<std::size_t>(res.k_used));

  detail::Rng rng(cfg.seed);
  const std::size_t n_synth = (static_cast<std::size_t>(cfg.percent) * m + 99) / 100;
  res.data = ds;
  res.data.examples.reserve(ds.size() + n_synth);
  std::vector<std::size_t> order(m);
  for (std::size_t s = 0; s < n_synth; ++s) {
    if (s % m == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t k = 0; k + 1 < m; ++k) std::swap(order[k], order[k + rng.index(m - k)]);
    }
    const std::size_t j = order[s % m];
    const std::size_t parent = minority[j];
    const std::size_t neighbor = neighbors[j][rng.index(neighbors[j].size())];
    const double g = gap(rng);
    const auto& p = ds.examples[parent];
    const auto& q = ds.examples[neighbor];
    LabeledExample syn;
    syn.at = p.at;
    syn.x.resize(p.x.size());
    for (std::size_t f = 0; f < p.x.size(); ++f) syn.x[f] = p.x[f] + g * (q.x[f] - p.x[f]);
    syn.y = p.y + g * (q.y - p.y);
    res.data.examples.push_back(std::move(syn));
    res.origins.push_back({parent, neighbor, g});
  }
  return res;
}

inline SmoteResult smote_with_origins(const Dataset& ds, const SmoteConfig& cfg) {
  return smote_with_origins(ds, cfg, [](detail::Rng& rng) { return rng.open_uniform(); });
}

/// Originals followed by the synthetic rows.
inline Dataset smote(const Dataset& ds, const SmoteConfig& cfg) { return smote_with_origins(ds, cfg).data; }

}  // namespace spike
