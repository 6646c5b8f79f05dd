#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "spike/spike.hpp"

namespace spike::testing {

inline Topology small_topology(int n_upstream = 2) {
  Topology t;
  t.target = {"ndoc"};
  for (int k = 0; k < n_upstream; ++k) t.upstream.push_back({"up" + std::to_string(k)});
  return t;
}

// Every node, every minute in [t0, t0 + minutes): values from `fill`.
inline std::vector<MetricRecord> make_records(const Topology& topo, std::int64_t t0, std::size_t minutes,
                                              const std::function<void(MetricRecord&)>& fill = {}) {
  std::vector<MetricRecord> out;
  for (std::size_t m = 0; m < minutes; ++m) {
    for (const auto& name : topo.node_names()) {
      MetricRecord r;
      r.timestamp = t0 + static_cast<std::int64_t>(m);
      r.node.name = name;
      r.response_ms = 100.0;
      r.errors_per_min = 1.0;
      r.memory_mb = 1000.0;
      r.throughput = 30.0;
      r.apdex = 0.9;
      if (fill) fill(r);
      out.push_back(r);
    }
  }
  return out;
}

inline SeriesStore make_store(const Topology& topo, std::size_t minutes,
                              const std::function<void(MetricRecord&)>& fill = {}) {
  return SeriesStore::from_records(make_records(topo, 0, minutes, fill), topo);
}

class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() / (stem + "_" + std::to_string(stamp));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace spike::testing
