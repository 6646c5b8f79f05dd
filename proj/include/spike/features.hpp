#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spike/detail/text.hpp"
#include "spike/error.hpp"
#include "spike/telemetry.hpp"

namespace spike {

/// Minutes into the past at which the target response time is sampled.
struct LagSpec {
  std::vector<int> offsets_min{5, 10, 15, 30, 60, 90, 120, 150, 180, 300, 1440};

  void validate() const {
    for (std::size_t k = 0; k < offsets_min.size(); ++k) {
      if (offsets_min[k] <= 0) throw Error("lag offsets must be positive");
      if (k > 0 && offsets_min[k] <= offsets_min[k - 1]) throw Error("lag offsets must be strictly increasing");
    }
  }

  int max() const { return offsets_min.empty() ? 0 : offsets_min.back(); }
};

struct LabeledExample {
  std::int64_t at = 0;
  std::vector<double> x;
  double y = 0.0;

  bool operator==(const LabeledExample&) const = default;
};

/// Per-feature min-max statistics. Constant features scale to 0.
struct Normalization {
  std::vector<double> min;
  std::vector<double> max;

  double scale(std::size_t feature, double v) const {
    const double range = max[feature] - min[feature];
    return range > 0.0 ? (v - min[feature]) / range : 0.0;
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != min.size()) throw Error("normalization: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t f = 0; f < x.size(); ++f) out[f] = scale(f, x[f]);
    return out;
  }

  bool operator==(const Normalization&) const = default;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> layout;
  // Present when `examples` hold scaled features; maps raw -> scaled.
  std::optional<Normalization> normalization;

  std::size_t size() const { return examples.size(); }
  std::size_t dims() const { return layout.size(); }
  bool empty() const { return examples.empty(); }

  /// Rows [begin, end) with the same layout and normalization.
  Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset out{{}, layout, normalization};
    out.examples.assign(examples.begin() + static_cast<std::ptrdiff_t>(begin),
                        examples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

/// [target rt] ++ [target rt lags] ++ [rt, ee, mp, thr, as per upstream node].
inline std::vector<std::string> feature_layout(const Topology& topo, const LagSpec& lags) {
  std::vector<std::string> layout{topo.target.name + ".rt"};
  for (int off : lags.offsets_min) layout.push_back(topo.target.name + ".rt_lag" + std::to_string(off));
  for (const auto& up : topo.upstream)
    for (Metric m : kAllMetrics) layout.push_back(up.name + "." + std::string(metric_tag(m)));
  return layout;
}

/// One example per minute t with full lag history and a label horizon_min
/// ahead; earlier and later minutes are dropped rather than imputed.
inline Dataset build_examples(const SeriesStore& store, const Topology& topo, const LagSpec& lags = {},
                              int horizon_min = 30) {
  topo.validate();
  lags.validate();
  if (horizon_min < 1) throw Error("horizon must be >= 1 minute");
  const std::int64_t needed = lags.max() + horizon_min;
  const std::int64_t span = store.empty() ? -1 : store.t_end() - store.t_start();
  if (span < needed)
    throw Error("store spans " + std::to_string(std::max<std::int64_t>(span + 1, 0)) + " minutes; at least " +
                std::to_string(needed + 1) + " are required (max lag " + std::to_string(lags.max()) + " + horizon " +
                std::to_string(horizon_min) + ")");

  Dataset ds;
  ds.layout = feature_layout(topo, lags);
  const auto target = store.series(topo.target.name);
  std::vector<std::span<const MetricRecord>> ups;
  for (const auto& u : topo.upstream) ups.push_back(store.series(u.name));

  const auto first = static_cast<std::size_t>(lags.max());
  const auto last = static_cast<std::size_t>(span - horizon_min);
  ds.examples.reserve(last - first + 1);
  for (std::size_t m = first; m <= last; ++m) {
    LabeledExample ex;
    ex.at = target[m].timestamp;
    ex.x.reserve(ds.layout.size());
    ex.x.push_back(target[m].response_ms);
    for (int off : lags.offsets_min) ex.x.push_back(target[m - static_cast<std::size_t>(off)].response_ms);
    for (const auto& s : ups)
      for (Metric metric : kAllMetrics) ex.x.push_back(metric_value(s[m], metric));
    ex.y = target[m + static_cast<std::size_t>(horizon_min)].response_ms;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline Normalization fit_normalization(const Dataset& ds) {
  if (ds.empty()) throw Error("normalize: empty dataset");
  Normalization n;
  n.min = ds.examples.front().x;
  n.max = ds.examples.front().x;
  for (const auto& ex : ds.examples) {
    for (std::size_t f = 0; f < ex.x.size(); ++f) {
      n.min[f] = std::min(n.min[f], ex.x[f]);
      n.max[f] = std::max(n.max[f], ex.x[f]);
    }
  }
  return n;
}

/// Scales features to [0,1] with statistics of `ds` itself and stores them.
/// An already-normalized dataset is returned unchanged.
inline Dataset normalize(const Dataset& ds) {
  if (ds.normalization) return ds;
  Dataset out = ds;
  out.normalization = fit_normalization(ds);
  for (auto& ex : out.examples) ex.x = out.normalization->apply(ex.x);
  return out;
}

inline void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "at";
  for (const auto& name : ds.layout) out << ',' << name;
  out << ",y\n";
  for (const auto& ex : ds.examples) {
    out << ex.at;
    for (double v : ex.x) out << ',' << detail::format_number(v);
    out << ',' << detail::format_number(ex.y) << '\n';
  }
}

/// Reads a dataset written by write_dataset_csv. When `expected_layout` is
/// given, the header must match it exactly.
inline Dataset read_dataset_csv(std::istream& in, const std::optional<std::vector<std::string>>& expected_layout = {},
                                const std::string& source = "<input>") {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_comment(line)) continue;
    const auto f = detail::split(line);
    if (!header_seen) {
      if (f.size() < 2 || f.front() != "at" || f.back() != "y")
        throw Error(source + ":" + std::to_string(line_no) + ": dataset header must be 'at,<features...>,y'");
      for (std::size_t k = 1; k + 1 < f.size(); ++k) ds.layout.emplace_back(f[k]);
      if (expected_layout && *expected_layout != ds.layout)
        throw Error(source + ": feature layout does not match the expected layout");
      header_seen = true;
      continue;
    }
    if (f.size() != ds.layout.size() + 2)
      throw Error(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(ds.layout.size() + 2) +
                  " fields, found " + std::to_string(f.size()));
    LabeledExample ex;
    if (!detail::parse_int(f[0], ex.at))
      throw Error(source + ":" + std::to_string(line_no) + ": malformed timestamp '" + std::string(f[0]) + "'");
    ex.x.resize(ds.layout.size());
    for (std::size_t k = 0; k < ds.layout.size(); ++k)
      if (!detail::parse_double(f[k + 1], ex.x[k]))
        throw Error(source + ":" + std::to_string(line_no) + ": malformed number '" + std::string(f[k + 1]) + "'");
    if (!detail::parse_double(f.back(), ex.y))
      throw Error(source + ":" + std::to_string(line_no) + ": malformed label '" + std::string(f.back()) + "'");
    if (!ds.examples.empty() && ex.at < ds.examples.back().at)
      throw Error(source + ":" + std::to_string(line_no) + ": examples are not time-ordered");
    ds.examples.push_back(std::move(ex));
  }
  if (!header_seen) throw Error(source + ": missing dataset header");
  return ds;
}

/// Window-level version of the example layout, used by the backtest.
/// Row w holds features observed up to the end of window w; lag offsets are
/// converted to whole windows (rounded up) and clamped at the first window.
/// label[w] is the maximum target response inside window w.
struct WindowTable {
  std::vector<std::string> layout;
  std::vector<std::int64_t> start;
  std::vector<std::vector<double>> features;
  std::vector<double> window_max;
  int window_minutes = 10;

  std::size_t size() const { return features.size(); }
};

inline WindowTable build_window_table(const WindowSeries& ws, const Topology& topo, const LagSpec& lags = {}) {
  topo.validate();
  lags.validate();
  if (ws.size() == 0) throw Error("window table: no windows");
  WindowTable t;
  t.layout = feature_layout(topo, lags);
  t.window_minutes = ws.window_minutes();
  const auto target = ws.series(topo.target.name);
  std::vector<std::span<const WindowRecord>> ups;
  for (const auto& u : topo.upstream) ups.push_back(ws.series(u.name));
  std::vector<std::size_t> lag_windows;
  for (int off : lags.offsets_min)
    lag_windows.push_back(static_cast<std::size_t>((off + ws.window_minutes() - 1) / ws.window_minutes()));

  const std::size_t n = ws.size();
  t.start.resize(n);
  t.features.resize(n);
  t.window_max.resize(n);
  for (std::size_t w = 0; w < n; ++w) {
    auto& x = t.features[w];
    x.reserve(t.layout.size());
    x.push_back(target[w].response_mean);
    for (auto lw : lag_windows) x.push_back(target[w >= lw ? w - lw : 0].response_mean);
    for (const auto& s : ups)
      for (Metric m : kAllMetrics) x.push_back(s[w].value(m));
    t.start[w] = target[w].start;
    t.window_max[w] = target[w].response_max;
  }
  return t;
}

/// Examples pairing features of window w with the maximum response of
/// window w + horizon_windows, for every w where that window exists.
inline Dataset window_examples(const WindowTable& table, std::size_t horizon_windows) {
  Dataset ds;
  ds.layout = table.layout;
  for (std::size_t w = 0; w + horizon_windows < table.size(); ++w)
    ds.examples.push_back({table.start[w], table.features[w], table.window_max[w + horizon_windows]});
  return ds;
}

}  // namespace spike
