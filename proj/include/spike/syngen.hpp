#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "spike/detail/random.hpp"
#include "spike/error.hpp"
#include "spike/telemetry.hpp"

namespace spike {

struct FivePoint {
  double min = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double max = 0.0;
};

/// Baseline marginals. Errors, apdex, memory and throughput follow the
/// production percentiles; response time is a quiet-service
/// baseline that stays below the spike threshold.
struct PercentileTargets {
  FivePoint response{30.0, 140.0, 180.0, 230.0, 440.0};
  FivePoint errors{0.0, 0.12, 1.72, 3.88, 347.0};
  FivePoint apdex{0.53, 0.96, 0.97, 0.97, 0.99};
  FivePoint memory{67800.0, 105000.0, 107000.0, 111000.0, 272000.0};
  FivePoint throughput{2.83, 15.90, 35.60, 102.0, 243.0};
};

struct GenConfig {
  int days = 1;
  std::uint64_t seed = 0;
  int n_upstream = 13;
  double spike_rate = 0.034;
  double buildup_fraction = 0.5;
  double spike_threshold_ms = 470.0;
  PercentileTargets percentile_targets;
  std::int64_t start_minute = 25771680;  // 2019-01-01T00:00Z

  void validate() const {
    if (days < 1) throw Error("generate: days must be >= 1");
    if (!(spike_rate > 0.0 && spike_rate < 1.0)) throw Error("generate: spike_rate must be in (0,1)");
    if (n_upstream < 1) throw Error("generate: n_upstream must be >= 1");
    if (!(buildup_fraction >= 0.0 && buildup_fraction <= 1.0))
      throw Error("generate: buildup_fraction must be in [0,1]");
    if (!(spike_threshold_ms > 0.0)) throw Error("generate: spike_threshold_ms must be positive");
    if (start_minute < 0) throw Error("generate: start_minute must be >= 0");
  }
};

enum class SpikeKind { buildup, sudden };

struct InjectedSpike {
  std::int64_t timestamp = 0;  // first minute above threshold
  SpikeKind kind = SpikeKind::sudden;
  std::vector<std::string> causal_nodes;
  int ramp_minutes = 0;
  int duration_minutes = 0;
};

/// Generator-side record of what was injected. Used only by tests and
/// evaluation oracles; learners never see it.
struct GroundTruth {
  std::vector<InjectedSpike> spikes;
  std::vector<std::string> causal_pool;
};

struct Generated {
  Topology topology;
  SeriesStore store;
  GroundTruth truth;
};

namespace detail {

inline constexpr double kZ75 = 0.6744897501960817;

struct LogNormal {
  double mu = 0.0;
  double sigma = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  // p50 and p75 fix the two parameters; min/max clip.
  static LogNormal fit(const FivePoint& t, double scale = 1.0) {
    LogNormal d;
    d.mu = std::log(t.p50 * scale);
    d.sigma = t.p75 > t.p50 ? std::log(t.p75 / t.p50) / kZ75 : 0.0;
    d.lo = t.min * scale;
    d.hi = t.max * scale;
    return d;
  }

  double at(double z) const { return std::clamp(std::exp(mu + sigma * z), lo, hi); }
};

// Stationary AR(1) latent with N(0,1) marginals.
class Latent {
 public:
  Latent(double rho, Rng& rng) : rho_(rho), z_(rng.normal()) {}
  double next(Rng& rng) {
    z_ = rho_ * z_ + std::sqrt(1.0 - rho_ * rho_) * rng.normal();
    return z_;
  }

 private:
  double rho_;
  double z_;
};

// Decreasing in latency; near 0.98 at a quiet 180 ms.
inline double apdex_curve(double response_ms) {
  const double r = response_ms / 1000.0;
  return 0.99 - 0.46 * (r * r) / (1.0 + r * r);
}

inline std::vector<std::string> upstream_names(int n) {
  static const char* kNames[] = {"ret", "lo", "sh-synr", "auth", "idx", "qry", "cache",
                                 "meta", "rank", "store", "log", "geo", "cfg"};
  std::vector<std::string> out;
  for (int k = 0; k < n; ++k) {
    if (k < 13) {
      out.emplace_back(kNames[k]);
    } else {
      out.push_back("up" + std::to_string(k + 1));
    }
  }
  return out;
}

}  // namespace detail

inline constexpr const char* kDefaultTargetNode = "ndoc";

inline Topology default_topology(int n_upstream = 13) {
  Topology t;
  t.target.name = kDefaultTargetNode;
  for (auto& n : detail::upstream_names(n_upstream)) t.upstream.push_back({std::move(n)});
  return t;
}

/// Synthesizes a telemetry store with long-tailed baselines and injected
/// response spikes. Build-up spikes are preceded by a 30-60 minute ramp in
/// the target and rising errors / falling apdex in 1-3 causal upstream
/// nodes; sudden spikes have no precursor.
inline Generated generate(const GenConfig& cfg) {
  cfg.validate();
  detail::Rng rng(cfg.seed);
  const auto& tg = cfg.percentile_targets;
  const std::size_t total = static_cast<std::size_t>(cfg.days) * 1440;
  const std::size_t n_nodes = static_cast<std::size_t>(cfg.n_upstream) + 1;

  Generated out;
  out.topology = default_topology(cfg.n_upstream);
  const auto names = out.topology.node_names();

  // Causal pool: up to three upstream nodes.
  std::vector<std::size_t> up_idx;
  for (std::size_t k = 1; k < n_nodes; ++k) up_idx.push_back(k);
  for (std::size_t k = 0; k + 1 < up_idx.size(); ++k)
    std::swap(up_idx[k], up_idx[k + rng.index(up_idx.size() - k)]);
  const std::size_t pool_size =
      static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(std::min<std::size_t>(3, up_idx.size()))));
  std::vector<std::size_t> pool(up_idx.begin(), up_idx.begin() + static_cast<std::ptrdiff_t>(pool_size));
  std::sort(pool.begin(), pool.end());
  for (auto k : pool) out.truth.causal_pool.push_back(names[k]);

  // Baselines. cols[node][metric] holds one value per minute.
  std::vector<std::array<std::vector<double>, 5>> cols(n_nodes);
  std::vector<double> rt_scale(n_nodes, 1.0);
  for (std::size_t n = 1; n < n_nodes; ++n) rt_scale[n] = rng.uniform(0.3, 0.8);
  for (std::size_t n = 0; n < n_nodes; ++n) {
    const auto rt = detail::LogNormal::fit(tg.response, rt_scale[n]);
    const auto ee = detail::LogNormal::fit(tg.errors);
    const auto mp = detail::LogNormal::fit(tg.memory);
    const auto thr = detail::LogNormal::fit(tg.throughput);
    detail::Latent zrt(0.8, rng), zee(0.6, rng), zmp(0.98, rng), zthr(0.8, rng);
    for (auto& c : cols[n]) c.resize(total);
    for (std::size_t m = 0; m < total; ++m) {
      cols[n][0][m] = rt.at(zrt.next(rng));
      cols[n][1][m] = ee.at(zee.next(rng));
      cols[n][2][m] = mp.at(zmp.next(rng));
      cols[n][3][m] = thr.at(zthr.next(rng));
    }
  }

  // Spike schedule: one event per equal slot, so ramps never overlap.
  constexpr int kMaxRamp = 60;
  constexpr int kDMin = 15, kDMax = 30;  // plateau minutes, uniform 15..30
  const double mean_buildup = 0.5 * (kDMin + kDMax);
  const double mean_sudden = 2.5;    // uniform 1..4
  const double per_event = cfg.buildup_fraction * mean_buildup + (1.0 - cfg.buildup_fraction) * mean_sudden;
  std::size_t n_events = static_cast<std::size_t>(std::llround(cfg.spike_rate * static_cast<double>(total) / per_event));
  n_events = std::min<std::size_t>(n_events, total / (kMaxRamp + 40));
  const double thr_ms = cfg.spike_threshold_ms;
  const double ramp_peak = 0.9 * thr_ms;
  const double base_rt_median = tg.response.p50;
  std::vector<double> ee_median(n_nodes, tg.errors.p50);
  // Upstream response medians, for degradation during ramps.
  std::vector<double> rt_median(n_nodes);
  for (std::size_t n = 0; n < n_nodes; ++n) rt_median[n] = tg.response.p50 * rt_scale[n];
  // Additive apdex penalty per minute for causal nodes.
  std::vector<std::vector<double>> as_penalty(n_nodes, std::vector<double>(total, 0.0));

  const double slot = n_events ? static_cast<double>(total) / static_cast<double>(n_events) : 0.0;
  for (std::size_t e = 0; e < n_events; ++e) {
    const auto slot_start = static_cast<std::int64_t>(std::floor(slot * static_cast<double>(e)));
    const auto slot_end = static_cast<std::int64_t>(std::floor(slot * static_cast<double>(e + 1)));
    InjectedSpike sp;
    sp.kind = rng.uniform() < cfg.buildup_fraction ? SpikeKind::buildup : SpikeKind::sudden;
    sp.duration_minutes = sp.kind == SpikeKind::buildup ? static_cast<int>(rng.integer(kDMin, kDMax))
                                                        : static_cast<int>(rng.integer(1, 4));
    sp.ramp_minutes = sp.kind == SpikeKind::buildup ? static_cast<int>(rng.integer(30, kMaxRamp)) : 0;
    const std::int64_t earliest = slot_start + kMaxRamp;
    const std::int64_t latest = std::max(earliest, slot_end - sp.duration_minutes - 1);
    const std::int64_t onset = rng.integer(earliest, latest);
    const double level = rng.uniform(1.1, 2.5) * thr_ms;
    for (int d = 0; d < sp.duration_minutes; ++d) {
      const auto m = static_cast<std::size_t>(onset + d);
      cols[0][0][m] = std::max(level * (1.0 + 0.05 * rng.normal()), thr_ms + 1.0);
    }
    if (sp.kind == SpikeKind::buildup) {
      const std::vector<std::size_t>& chosen = pool;
      for (auto n : chosen) sp.causal_nodes.push_back(names[n]);
      // The ramp level encodes time-to-onset: tau minutes before onset the
      // target sits (tau/60) of the way from ramp_peak back to its median.
      for (int tau = 1; tau <= sp.ramp_minutes; ++tau) {
        const auto m = static_cast<std::size_t>(onset - tau);
        const double progress = 1.0 - static_cast<double>(tau) / kMaxRamp;
        const double rt = ramp_peak - (ramp_peak - base_rt_median) * (1.0 - progress);
        cols[0][0][m] = std::min(std::max(cols[0][0][m], rt * (1.0 + 0.03 * rng.normal())), thr_ms - 1.0);
        for (auto n : chosen) {
          cols[n][1][m] = ee_median[n] * (3.0 + 7.0 * progress) * (1.0 + 0.1 * rng.normal());
          cols[n][0][m] = std::max(cols[n][0][m], rt_median[n] * (1.0 + 2.0 * progress));
          as_penalty[n][m] = 0.15 * progress;
        }
      }
    }
    sp.timestamp = cfg.start_minute + onset;
    out.truth.spikes.push_back(std::move(sp));
  }

  // Apdex tracks latency with a little noise.
  for (std::size_t n = 0; n < n_nodes; ++n)
    for (std::size_t m = 0; m < total; ++m)
      cols[n][4][m] = std::clamp(detail::apdex_curve(cols[n][0][m]) - as_penalty[n][m] + 0.005 * rng.normal(),
                                 tg.apdex.min, tg.apdex.max);

  std::vector<MetricRecord> records;
  records.reserve(total * n_nodes);
  for (std::size_t m = 0; m < total; ++m) {
    for (std::size_t n = 0; n < n_nodes; ++n) {
      MetricRecord r;
      r.timestamp = cfg.start_minute + static_cast<std::int64_t>(m);
      r.node.name = names[n];
      r.response_ms = cols[n][0][m];
      r.errors_per_min = std::max(0.0, cols[n][1][m]);
      r.memory_mb = cols[n][2][m];
      r.throughput = cols[n][3][m];
      r.apdex = cols[n][4][m];
      records.push_back(std::move(r));
    }
  }
  out.store = SeriesStore::from_records(records, out.topology);
  return out;
}

inline void write_truth_csv(const GroundTruth& truth, std::ostream& out) {
  out << "timestamp_min,kind,causal_nodes\n";
  for (const auto& s : truth.spikes) {
    out << s.timestamp << ',' << (s.kind == SpikeKind::buildup ? "buildup" : "sudden") << ',';
    for (std::size_t k = 0; k < s.causal_nodes.size(); ++k) out << (k ? ";" : "") << s.causal_nodes[k];
    out << '\n';
  }
}

/// Linear-interpolation percentiles (the numpy default).
inline FivePoint five_point(std::vector<double> values) {
  if (values.empty()) throw Error("describe: no values");
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

struct MetricSummary {
  std::string node;
  std::array<FivePoint, 5> metrics;  // indexed like kAllMetrics

  const FivePoint& operator[](Metric m) const { return metrics[static_cast<std::size_t>(m)]; }
};

inline std::vector<MetricSummary> describe(const SeriesStore& store) {
  if (store.empty() || store.minutes() == 0) throw Error("describe: empty store");
  std::vector<MetricSummary> out;
  for (const auto& node : store.nodes()) {
    MetricSummary s;
    s.node = node;
    const auto series = store.series(node);
    for (Metric m : kAllMetrics) {
      std::vector<double> v;
      v.reserve(series.size());
      for (const auto& r : series) v.push_back(metric_value(r, m));
      s.metrics[static_cast<std::size_t>(m)] = five_point(std::move(v));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace spike
