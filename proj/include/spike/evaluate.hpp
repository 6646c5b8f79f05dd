#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spike/detail/parallel.hpp"
#include "spike/detail/random.hpp"
#include "spike/detail/text.hpp"
#include "spike/error.hpp"
#include "spike/features.hpp"
#include "spike/learners.hpp"
#include "spike/resample.hpp"
#include "spike/telemetry.hpp"
#include "spike/tuner.hpp"

namespace spike {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  /// Absent when there are no actual positives.
  std::optional<double> recall() const {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
  }

  /// Absent when no alarm was raised.
  std::optional<double> precision() const {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
  }

  void add(bool alarm, bool spike) {
    if (alarm && spike) ++tp;
    else if (alarm) ++fp;
    else if (spike) ++fn;
    else ++tn;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

/// Positives are actual > spike_threshold_ms; alarms are
/// predicted > alarm_threshold_ms.
inline ConfusionMatrix confusion(std::span<const double> predicted, std::span<const double> actual,
                                 double spike_threshold_ms = 470.0, double alarm_threshold_ms = 470.0) {
  if (predicted.size() != actual.size())
    throw Error("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                std::to_string(actual.size()) + " actual values");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    cm.add(predicted[i] > alarm_threshold_ms, actual[i] > spike_threshold_ms);
  return cm;
}

inline std::string percent_or_dash(const std::optional<double>& v) {
  if (!v) return "-";
  return std::to_string(static_cast<long>(std::lround(*v * 100.0)));
}

// ---------------------------------------------------------------------------
// Stage one: time-ordered 80/20 evaluation

struct Stage1Options {
  std::optional<SmoteConfig> smote;
  std::optional<DEConfig> tune;
  std::optional<ParamSpace> space;  // default_space(kind) when absent
  double spike_threshold_ms = 470.0;
};

struct Stage1Result {
  ConfusionMatrix cm;
  std::size_t train_rows = 0;  // before SMOTE
  std::size_t test_rows = 0;
  LearnerSpec spec;  // after tuning
  AnyModel model;
  std::optional<TuneResult> tuning;
  std::vector<double> test_predictions;
  std::vector<std::string> warnings;
};

/// Trains on the first 80% of a time-ordered dataset and tests on the rest.
/// SMOTE and tuning only ever see the training side.
inline Stage1Result stage1(const Dataset& ds, const LearnerSpec& learner, const Stage1Options& opt = {}) {
  if (ds.size() < 5) throw Error("stage1: dataset too small");
  for (std::size_t i = 1; i < ds.size(); ++i)
    if (ds.examples[i].at < ds.examples[i - 1].at) throw Error("stage1: dataset is not time-ordered");
  const std::size_t cut = ds.size() * 4 / 5;
  const Dataset train = ds.slice(0, cut);
  const Dataset test = ds.slice(cut, ds.size());

  Stage1Result res;
  res.train_rows = train.size();
  res.test_rows = test.size();
  res.spec = learner;
  if (opt.tune) {
    const auto space = opt.space.value_or(default_space(learner.kind));
    res.tuning = tune_learner(train, space, learner, *opt.tune, opt.smote, opt.spike_threshold_ms);
    res.spec = res.tuning->spec;
  }
  Dataset fit_data = train;
  if (opt.smote) {
    auto sm = smote_with_origins(train, *opt.smote);
    fit_data = std::move(sm.data);
    res.warnings.insert(res.warnings.end(), sm.warnings.begin(), sm.warnings.end());
  }
  res.model = fit_model(res.spec, fit_data);
  std::size_t spikes = 0;
  for (const auto& ex : test.examples) {
    const bool spike = ex.y > opt.spike_threshold_ms;
    spikes += spike;
    res.cm.add(raises_alarm(res.model, ex.x, opt.spike_threshold_ms), spike);
    res.test_predictions.push_back(predict(res.model, ex.x));
  }
  if (spikes == 0) res.warnings.push_back("stage1: test side contains no spikes; recall is undefined");
  return res;
}

// ---------------------------------------------------------------------------
// Stage two: sliding-window backtest

/// Builds a model from a training set; `seed` is specific to the pair.
using ModelFactory = std::function<AnyModel(const Dataset& train, std::uint64_t seed)>;

/// Factory for a learner spec, optionally preceded by SMOTE. Training sets
/// with fewer than two spikes are fitted without SMOTE.
inline ModelFactory make_factory(const LearnerSpec& spec, std::optional<SmoteConfig> smote_cfg = std::nullopt) {
  if (spec.kind == LearnerKind::logistic) throw Error("backtest needs a regression learner (cart or forest)");
  return [spec, smote_cfg](const Dataset& train, std::uint64_t seed) -> AnyModel {
    LearnerSpec s = spec;
    s.forest.seed = detail::derive_seed(spec.forest.seed, seed);
    if (smote_cfg) {
      SmoteConfig c = *smote_cfg;
      c.seed = detail::derive_seed(smote_cfg->seed, seed);
      try {
        return fit_model(s, smote(train, c));
      } catch (const InsufficientMinority&) {
      }
    }
    return fit_model(s, train);
  };
}

struct BacktestPair {
  std::size_t i = 0;
  double predicted_ms = 0.0;
  double actual_ms = 0.0;
  std::string model_ref;

  bool operator==(const BacktestPair&) const = default;
};

struct BacktestReport {
  std::vector<BacktestPair> pairs;
  double L_hours = 24.0;
  int window_minutes = 10;
  std::size_t train_span = 144;
  std::size_t horizon_windows = 3;
  std::uint64_t seed = 0;

  /// Window offsets (relative to i) of the test windows.
  std::vector<std::size_t> test_offsets() const {
    std::vector<std::size_t> out;
    for (std::size_t h = 1; h <= horizon_windows; ++h) out.push_back(train_span + h);
    return out;
  }
};

struct BacktestOptions {
  double L_hours = 24.0;
  int horizon_min = 30;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Windows of training data for L hours, rounded up to whole windows.
inline std::size_t train_span_windows(double L_hours, int window_minutes) {
  if (!(L_hours > 0.0)) throw Error("L must be positive");
  return static_cast<std::size_t>(std::ceil(L_hours * 60.0 / window_minutes - 1e-9));
}

/// Rolling retrain-and-predict over a window series.
///
/// Pair i trains on the examples whose label window lies in
/// [i, i + train_span] (features are taken horizon windows earlier) and
/// predicts the horizon windows that follow, each from the features
/// horizon windows before it. The pair's prediction is the maximum of those
/// predictions and its actual value the maximum response across the test
/// windows. Nothing from the test windows reaches the factory.
class Backtester {
 public:
  Backtester(const WindowSeries& ws, const Topology& topo, const LagSpec& lags, ModelFactory factory,
             BacktestOptions opt = {})
      : table_(build_window_table(ws, topo, lags)), factory_(std::move(factory)), opt_(opt) {
    const int wm = ws.window_minutes();
    span_ = train_span_windows(opt.L_hours, wm);
    if (opt.horizon_min < 1) throw Error("horizon must be >= 1 minute");
    horizon_ = static_cast<std::size_t>((opt.horizon_min + wm - 1) / wm);
    if (table_.size() < span_ + horizon_ + 1)
      throw Error("backtest: " + std::to_string(table_.size()) + " windows are not enough; at least " +
                  std::to_string(span_ + horizon_ + 1) + " are needed for L=" + detail::format_number(opt.L_hours) +
                  "h");
  }

  std::size_t pair_count() const { return table_.size() - (span_ + horizon_); }
  std::size_t train_span() const { return span_; }
  std::size_t horizon_windows() const { return horizon_; }

  /// Training rows of pair i, in time order.
  Dataset training_set(std::size_t i) const {
    Dataset ds;
    ds.layout = table_.layout;
    for (std::size_t u = std::max(i, horizon_); u <= i + span_; ++u)
      ds.examples.push_back({table_.start[u - horizon_], table_.features[u - horizon_], table_.window_max[u]});
    return ds;
  }

  /// When no labelled row exists yet (very short L at the start of the
  /// series) the pair falls back to a single leaf at the mean window maximum.
  AnyModel fit_pair(std::size_t i) const {
    const Dataset train = training_set(i);
    if (!train.empty()) return factory_(train, detail::derive_seed(opt_.seed, i));
    double sum = 0.0;
    for (std::size_t u = i; u <= i + span_; ++u) sum += table_.window_max[u];
    const auto n = static_cast<double>(span_ + 1);
    return RegressionTree{table_.layout, {TreeNode{.prediction = sum / n, .n = span_ + 1}}, {}};
  }

  BacktestPair run_pair(std::size_t i) const {
    const AnyModel model = fit_pair(i);
    BacktestPair p;
    p.i = i;
    p.predicted_ms = -std::numeric_limits<double>::infinity();
    p.actual_ms = -std::numeric_limits<double>::infinity();
    for (std::size_t h = 1; h <= horizon_; ++h) {
      const std::size_t j = i + span_ + h;
      p.predicted_ms = std::max(p.predicted_ms, predict(model, table_.features[j - horizon_]));
      p.actual_ms = std::max(p.actual_ms, table_.window_max[j]);
    }
    p.model_ref = model_fingerprint(model);
    return p;
  }

  BacktestReport run() const {
    BacktestReport r;
    r.L_hours = opt_.L_hours;
    r.window_minutes = table_.window_minutes;
    r.train_span = span_;
    r.horizon_windows = horizon_;
    r.seed = opt_.seed;
    r.pairs.resize(pair_count());
    detail::parallel_for(r.pairs.size(), opt_.threads, [&](std::size_t i) { r.pairs[i] = run_pair(i); });
    return r;
  }

  const WindowTable& table() const { return table_; }

 private:
  WindowTable table_;
  ModelFactory factory_;
  BacktestOptions opt_;
  std::size_t span_ = 0;
  std::size_t horizon_ = 0;
};

inline BacktestReport stage2_backtest(const WindowSeries& ws, const Topology& topo, const LagSpec& lags,
                                      ModelFactory factory, double L_hours = 24.0, BacktestOptions opt = {}) {
  opt.L_hours = L_hours;
  return Backtester(ws, topo, lags, std::move(factory), opt).run();
}

// ---------------------------------------------------------------------------
// Alarm-threshold sensitivity

struct SweepPoint {
  double alarm_threshold_ms = 0.0;
  std::optional<double> recall;
  std::optional<double> precision;
  std::size_t alarms = 0;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
};

/// from, from + step, ... up to `to` inclusive.
inline std::vector<double> threshold_range(double from = 370.0, double to = 490.0, double step = 5.0) {
  if (!(step > 0.0)) throw Error("sweep: step must be positive");
  if (to < from) throw Error("sweep: 'to' must not be below 'from'");
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double t = from + static_cast<double>(k) * step;
    if (t > to + 1e-9 * std::max(1.0, std::abs(to))) break;
    out.push_back(t);
  }
  return out;
}

inline SweepCurve threshold_sweep(const BacktestReport& report, const std::vector<double>& thresholds,
                                  double spike_threshold_ms = 470.0) {
  if (report.pairs.empty()) throw Error("sweep: empty backtest report");
  for (std::size_t k = 1; k < thresholds.size(); ++k)
    if (!(thresholds[k] > thresholds[k - 1])) throw Error("sweep: thresholds must be strictly increasing");
  std::vector<double> predicted, actual;
  for (const auto& p : report.pairs) {
    predicted.push_back(p.predicted_ms);
    actual.push_back(p.actual_ms);
  }
  SweepCurve curve;
  for (double t : thresholds) {
    const auto cm = confusion(predicted, actual, spike_threshold_ms, t);
    curve.points.push_back({t, cm.recall(), cm.precision(), cm.tp + cm.fp});
  }
  return curve;
}

inline SweepCurve threshold_sweep(const BacktestReport& report) {
  return threshold_sweep(report, threshold_range());
}

// ---------------------------------------------------------------------------
// CSV

inline void write_report_csv(const BacktestReport& r, std::ostream& out) {
  out << "# L_hours=" << detail::format_number(r.L_hours) << " window_minutes=" << r.window_minutes
      << " train_span=" << r.train_span << " test_offsets=";
  const auto offs = r.test_offsets();
  for (std::size_t k = 0; k < offs.size(); ++k) out << (k ? ";" : "") << offs[k];
  out << " seed=" << r.seed << '\n';
  out << "i,predicted_ms,actual_ms\n";
  for (const auto& p : r.pairs)
    out << p.i << ',' << detail::format_number(p.predicted_ms) << ',' << detail::format_number(p.actual_ms) << '\n';
}

inline BacktestReport read_report_csv(std::istream& in, const std::string& source = "<input>") {
  BacktestReport r;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      for (auto tok : detail::split(t.substr(1), ' ')) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) continue;
        const auto key = tok.substr(0, eq);
        const auto val = tok.substr(eq + 1);
        std::int64_t iv = 0;
        if (key == "L_hours") detail::parse_double(val, r.L_hours);
        else if (key == "window_minutes" && detail::parse_int(val, iv)) r.window_minutes = static_cast<int>(iv);
        else if (key == "train_span" && detail::parse_int(val, iv)) r.train_span = static_cast<std::size_t>(iv);
        else if (key == "test_offsets") r.horizon_windows = detail::split(val, ';').size();
        else if (key == "seed" && detail::parse_int(val, iv)) r.seed = static_cast<std::uint64_t>(iv);
      }
      continue;
    }
    if (!header_seen) {
      if (t != "i,predicted_ms,actual_ms")
        throw Error(source + ":" + std::to_string(line_no) + ": header must be 'i,predicted_ms,actual_ms'");
      header_seen = true;
      continue;
    }
    const auto f = detail::split(t);
    BacktestPair p;
    std::int64_t i = 0;
    if (f.size() != 3 || !detail::parse_int(f[0], i) || i < 0 || !detail::parse_double(f[1], p.predicted_ms) ||
        !detail::parse_double(f[2], p.actual_ms))
      throw Error(source + ":" + std::to_string(line_no) + ": malformed report row");
    p.i = static_cast<std::size_t>(i);
    r.pairs.push_back(p);
  }
  if (!header_seen) throw Error(source + ": missing report header");
  return r;
}

inline void write_sweep_csv(const SweepCurve& c, std::ostream& out) {
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_number(*v) : std::string(); };
  out << "threshold_ms,recall,precision,alarms\n";
  for (const auto& p : c.points)
    out << detail::format_number(p.alarm_threshold_ms) << ',' << opt(p.recall) << ',' << opt(p.precision) << ','
        << p.alarms << '\n';
}

}  // namespace spike
