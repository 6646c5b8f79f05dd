#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "spike/detail/text.hpp"
#include "spike/error.hpp"

namespace spike {

struct NodeId {
  std::string name;

  auto operator<=>(const NodeId&) const = default;
};

/// One node's telemetry for one minute.
struct MetricRecord {
  std::int64_t timestamp = 0;  // UTC epoch minutes
  NodeId node;
  double response_ms = 0.0;
  double errors_per_min = 0.0;
  double memory_mb = 0.0;
  double throughput = 0.0;
  double apdex = 1.0;

  bool operator==(const MetricRecord&) const = default;
};

enum class Metric { response, errors, memory, throughput, apdex };

inline constexpr std::array<Metric, 5> kAllMetrics = {Metric::response, Metric::errors, Metric::memory,
                                                      Metric::throughput, Metric::apdex};

/// Short column tag used in feature names ("rt", "ee", "mp", "thr", "as").
inline std::string_view metric_tag(Metric m) {
  switch (m) {
    case Metric::response: return "rt";
    case Metric::errors: return "ee";
    case Metric::memory: return "mp";
    case Metric::throughput: return "thr";
    case Metric::apdex: return "as";
  }
  return "?";
}

inline double metric_value(const MetricRecord& r, Metric m) {
  switch (m) {
    case Metric::response: return r.response_ms;
    case Metric::errors: return r.errors_per_min;
    case Metric::memory: return r.memory_mb;
    case Metric::throughput: return r.throughput;
    case Metric::apdex: return r.apdex;
  }
  return 0.0;
}

inline double& metric_ref(MetricRecord& r, Metric m) {
  switch (m) {
    case Metric::response: return r.response_ms;
    case Metric::errors: return r.errors_per_min;
    case Metric::memory: return r.memory_mb;
    case Metric::throughput: return r.throughput;
    case Metric::apdex: break;
  }
  return r.apdex;
}

/// Empty string when the record is valid, otherwise the reason.
inline std::string record_problem(const MetricRecord& r) {
  if (r.node.name.empty()) return "empty node name";
  if (r.timestamp < 0) return "negative timestamp";
  if (!(r.apdex >= 0.0 && r.apdex <= 1.0)) return "apdex " + detail::format_number(r.apdex) + " outside [0,1]";
  for (Metric m : {Metric::response, Metric::errors, Metric::memory, Metric::throughput}) {
    const double v = metric_value(r, m);
    if (!(v >= 0.0) || !std::isfinite(v))
      return std::string(metric_tag(m)) + " value " + detail::format_number(v) + " is negative or not finite";
  }
  return {};
}

/// The target service and the services directly upstream of it. Upstream
/// order fixes the feature layout.
struct Topology {
  NodeId target;
  std::vector<NodeId> upstream;

  void validate() const {
    if (target.name.empty()) throw Error("topology: empty target node name");
    std::unordered_set<std::string> seen{target.name};
    for (const auto& n : upstream) {
      if (n.name.empty()) throw Error("topology: empty upstream node name");
      if (n.name == target.name) throw Error("topology: target '" + n.name + "' listed as upstream");
      if (!seen.insert(n.name).second) throw Error("topology: duplicate upstream node '" + n.name + "'");
    }
  }

  /// Target first, then upstream in order.
  std::vector<std::string> node_names() const {
    std::vector<std::string> out{target.name};
    for (const auto& n : upstream) out.push_back(n.name);
    return out;
  }

  bool operator==(const Topology&) const = default;
};

inline nlohmann::json topology_to_json(const Topology& t) {
  nlohmann::json up = nlohmann::json::array();
  for (const auto& n : t.upstream) up.push_back(n.name);
  return {{"target", t.target.name}, {"upstream", up}};
}

inline Topology topology_from_json(const nlohmann::json& j) {
  Topology t;
  try {
    t.target.name = j.at("target").get<std::string>();
    for (const auto& n : j.at("upstream")) t.upstream.push_back({n.get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("topology: ") + e.what());
  }
  t.validate();
  return t;
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open topology file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("topology file '" + path + "': " + e.what());
  }
  return topology_from_json(j);
}

struct GapPolicy {
  // Longest run of missing minutes that is repaired by interpolation.
  int max_fill_minutes = 3;
};

/// Validated per-node telemetry at a strict one-minute cadence. Every node
/// covers the same span [t_start, t_end].
class SeriesStore {
 public:
  SeriesStore() = default;

  /// Groups, validates and gap-repairs raw records. Nodes not in the
  /// topology are ignored.
  static SeriesStore from_records(std::span<const MetricRecord> records, const Topology& topology,
                                  GapPolicy policy = {}) {
    topology.validate();
    SeriesStore store;
    store.nodes_ = topology.node_names();
    std::map<std::string, std::vector<MetricRecord>, std::less<>> by_node;
    for (const auto& name : store.nodes_) by_node[name];
    for (const auto& r : records) {
      auto it = by_node.find(r.node.name);
      if (it == by_node.end()) continue;
      if (auto problem = record_problem(r); !problem.empty())
        throw Error("node '" + r.node.name + "' at minute " + std::to_string(r.timestamp) + ": " + problem);
      auto& seq = it->second;
      if (!seq.empty() && r.timestamp <= seq.back().timestamp)
        throw Error("node '" + r.node.name + "': timestamp " + std::to_string(r.timestamp) +
                    " does not follow " + std::to_string(seq.back().timestamp));
      seq.push_back(r);
    }
    for (const auto& name : store.nodes_)
      if (by_node[name].empty()) throw Error("missing node '" + name + "' in telemetry");

    store.t_start_ = by_node[store.nodes_.front()].front().timestamp;
    store.t_end_ = by_node[store.nodes_.front()].back().timestamp;
    for (const auto& name : store.nodes_) {
      store.t_start_ = std::min(store.t_start_, by_node[name].front().timestamp);
      store.t_end_ = std::max(store.t_end_, by_node[name].back().timestamp);
    }
    for (const auto& name : store.nodes_) {
      const auto& seq = by_node[name];
      if (seq.front().timestamp != store.t_start_ || seq.back().timestamp != store.t_end_)
        throw Error("node '" + name + "' covers [" + std::to_string(seq.front().timestamp) + ", " +
                    std::to_string(seq.back().timestamp) + "] but the store spans [" +
                    std::to_string(store.t_start_) + ", " + std::to_string(store.t_end_) + "]");
      store.series_.push_back(fill_gaps(seq, policy, store.gaps_filled_));
    }
    return store;
  }

  bool empty() const { return nodes_.empty(); }
  std::int64_t t_start() const { return t_start_; }
  std::int64_t t_end() const { return t_end_; }
  /// Records per node.
  std::size_t minutes() const { return empty() ? 0 : static_cast<std::size_t>(t_end_ - t_start_ + 1); }
  std::size_t gaps_filled() const { return gaps_filled_; }
  const std::vector<std::string>& nodes() const { return nodes_; }

  bool has_node(std::string_view name) const {
    return std::find(nodes_.begin(), nodes_.end(), name) != nodes_.end();
  }

  std::span<const MetricRecord> series(std::string_view node) const { return series_[node_index(node)]; }

  const MetricRecord& at(std::string_view node, std::int64_t t) const {
    if (t < t_start_ || t > t_end_) throw Error("minute " + std::to_string(t) + " outside store span");
    return series_[node_index(node)][static_cast<std::size_t>(t - t_start_)];
  }

  /// All records, time-major then node order.
  std::vector<MetricRecord> records() const {
    std::vector<MetricRecord> out;
    out.reserve(minutes() * nodes_.size());
    for (std::size_t m = 0; m < minutes(); ++m)
      for (const auto& s : series_) out.push_back(s[m]);
    return out;
  }

  bool operator==(const SeriesStore& o) const {
    return nodes_ == o.nodes_ && t_start_ == o.t_start_ && t_end_ == o.t_end_ && series_ == o.series_;
  }

 private:
  std::size_t node_index(std::string_view node) const {
    auto it = std::find(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end()) throw Error("unknown node '" + std::string(node) + "'");
    return static_cast<std::size_t>(it - nodes_.begin());
  }

  static std::vector<MetricRecord> fill_gaps(const std::vector<MetricRecord>& seq, GapPolicy policy,
                                             std::size_t& filled) {
    std::vector<MetricRecord> out;
    out.reserve(static_cast<std::size_t>(seq.back().timestamp - seq.front().timestamp + 1));
    out.push_back(seq.front());
    for (std::size_t k = 1; k < seq.size(); ++k) {
      const auto& prev = seq[k - 1];
      const auto& next = seq[k];
      const std::int64_t missing = next.timestamp - prev.timestamp - 1;
      if (missing > policy.max_fill_minutes)
        throw Error("node '" + next.node.name + "': gap of " + std::to_string(missing) + " minutes after minute " +
                    std::to_string(prev.timestamp) + " exceeds the " + std::to_string(policy.max_fill_minutes) +
                    "-minute repair limit");
      for (std::int64_t g = 1; g <= missing; ++g) {
        const double w = static_cast<double>(g) / static_cast<double>(missing + 1);
        MetricRecord r = prev;
        r.timestamp = prev.timestamp + g;
        for (Metric m : kAllMetrics) metric_ref(r, m) = (1.0 - w) * metric_value(prev, m) + w * metric_value(next, m);
        out.push_back(std::move(r));
        ++filled;
      }
      out.push_back(next);
    }
    return out;
  }

  std::vector<std::string> nodes_;
  std::vector<std::vector<MetricRecord>> series_;
  std::int64_t t_start_ = 0;
  std::int64_t t_end_ = -1;
  std::size_t gaps_filled_ = 0;
};

inline constexpr std::string_view kTelemetryHeader =
    "timestamp_min,node,response_ms,errors_per_min,memory_mb,throughput,apdex";

/// Parses telemetry CSV. `source` names the input in diagnostics.
inline SeriesStore read_telemetry_csv(std::istream& in, const Topology& topology, const std::string& source = "<input>",
                                      GapPolicy policy = {}) {
  std::vector<MetricRecord> records;
  std::map<std::string, std::int64_t, std::less<>> last_seen;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto fail = [&](const std::string& what) -> Error {
    return Error(source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_comment(line)) continue;
    if (!header_seen) {
      if (detail::trim(line) != kTelemetryHeader)
        throw fail("header must be '" + std::string(kTelemetryHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto f = detail::split(line);
    if (f.size() != 7) throw fail("expected 7 fields, found " + std::to_string(f.size()));
    MetricRecord r;
    if (!detail::parse_int(f[0], r.timestamp)) throw fail("malformed timestamp '" + std::string(f[0]) + "'");
    r.node.name = std::string(f[1]);
    const std::array<double*, 5> slots = {&r.response_ms, &r.errors_per_min, &r.memory_mb, &r.throughput, &r.apdex};
    for (std::size_t k = 0; k < 5; ++k)
      if (!detail::parse_double(f[k + 2], *slots[k])) throw fail("malformed number '" + std::string(f[k + 2]) + "'");
    if (auto problem = record_problem(r); !problem.empty()) throw fail(problem);
    auto [it, fresh] = last_seen.try_emplace(r.node.name, r.timestamp);
    if (!fresh) {
      if (r.timestamp <= it->second)
        throw fail("timestamp " + std::to_string(r.timestamp) + " for node '" + r.node.name +
                   "' is not after the previous " + std::to_string(it->second));
      it->second = r.timestamp;
    }
    records.push_back(std::move(r));
  }
  if (!header_seen) throw Error(source + ": missing header");
  try {
    return SeriesStore::from_records(records, topology, policy);
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
}

inline SeriesStore ingest_csv(const std::string& path, const Topology& topology, GapPolicy policy = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open telemetry file '" + path + "'");
  return read_telemetry_csv(in, topology, path, policy);
}

inline void write_telemetry_csv(const SeriesStore& store, std::ostream& out) {
  out << kTelemetryHeader << '\n';
  for (const auto& r : store.records()) {
    out << r.timestamp << ',' << r.node.name << ',' << detail::format_number(r.response_ms) << ','
        << detail::format_number(r.errors_per_min) << ',' << detail::format_number(r.memory_mb) << ','
        << detail::format_number(r.throughput) << ',' << detail::format_number(r.apdex) << '\n';
  }
}

struct ApdexBuckets {
  std::uint64_t satisfied = 0;
  std::uint64_t tolerating = 0;
  std::uint64_t frustrated = 0;
};

/// Satisfied count plus half the tolerating count, over all samples.
inline double apdex_score(const ApdexBuckets& b) {
  const std::uint64_t total = b.satisfied + b.tolerating + b.frustrated;
  if (total == 0) throw Error("apdex score undefined for zero samples");
  return (static_cast<double>(b.satisfied) + 0.5 * static_cast<double>(b.tolerating)) / static_cast<double>(total);
}

/// Aggregate of one node over one window. Features use the means;
/// spike labels use response_max.
struct WindowRecord {
  std::int64_t start = 0;
  double response_mean = 0.0;
  double response_max = 0.0;
  double errors_per_min = 0.0;
  double memory_mb = 0.0;
  double throughput = 0.0;
  double apdex = 0.0;

  double value(Metric m) const {
    switch (m) {
      case Metric::response: return response_mean;
      case Metric::errors: return errors_per_min;
      case Metric::memory: return memory_mb;
      case Metric::throughput: return throughput;
      case Metric::apdex: return apdex;
    }
    return 0.0;
  }

  bool operator==(const WindowRecord&) const = default;
};

class WindowSeries {
 public:
  WindowSeries(int window_minutes, std::vector<std::string> nodes, std::vector<std::vector<WindowRecord>> series)
      : window_minutes_(window_minutes), nodes_(std::move(nodes)), series_(std::move(series)) {}

  int window_minutes() const { return window_minutes_; }
  std::size_t size() const { return series_.empty() ? 0 : series_.front().size(); }
  const std::vector<std::string>& nodes() const { return nodes_; }

  std::span<const WindowRecord> series(std::string_view node) const { return series_[index(node)]; }
  std::span<WindowRecord> series(std::string_view node) { return series_[index(node)]; }

 private:
  std::size_t index(std::string_view node) const {
    auto it = std::find(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end()) throw Error("unknown node '" + std::string(node) + "'");
    return static_cast<std::size_t>(it - nodes_.begin());
  }

  int window_minutes_;
  std::vector<std::string> nodes_;
  std::vector<std::vector<WindowRecord>> series_;
};

/// Tiles the store into consecutive windows from t_start; a trailing
/// partial window is dropped.
inline WindowSeries windowize(const SeriesStore& store, int window_minutes = 10) {
  if (store.empty() || store.minutes() == 0) throw Error("windowize: empty store");
  if (window_minutes < 1) throw Error("windowize: window_minutes must be >= 1");
  const std::size_t w = static_cast<std::size_t>(window_minutes);
  const std::size_t count = store.minutes() / w;
  std::vector<std::vector<WindowRecord>> all;
  for (const auto& node : store.nodes()) {
    const auto s = store.series(node);
    std::vector<WindowRecord> out(count);
    for (std::size_t k = 0; k < count; ++k) {
      WindowRecord agg;
      agg.start = s[k * w].timestamp;
      agg.response_max = s[k * w].response_ms;
      for (std::size_t m = k * w; m < (k + 1) * w; ++m) {
        agg.response_mean += s[m].response_ms;
        agg.response_max = std::max(agg.response_max, s[m].response_ms);
        agg.errors_per_min += s[m].errors_per_min;
        agg.memory_mb += s[m].memory_mb;
        agg.throughput += s[m].throughput;
        agg.apdex += s[m].apdex;
      }
      const double n = static_cast<double>(w);
      agg.response_mean /= n;
      agg.errors_per_min /= n;
      agg.memory_mb /= n;
      agg.throughput /= n;
      agg.apdex /= n;
      // Rounding in the mean must not push it above the maximum.
      agg.response_mean = std::min(agg.response_mean, agg.response_max);
      out[k] = agg;
    }
    all.push_back(std::move(out));
  }
  return WindowSeries(window_minutes, store.nodes(), std::move(all));
}

}  // namespace spike
