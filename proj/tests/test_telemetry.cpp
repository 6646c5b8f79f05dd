#include "spike/telemetry.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "support.hpp"

namespace spike {
namespace {

using testing::make_records;
using testing::make_store;
using testing::small_topology;

std::string to_csv(const std::vector<MetricRecord>& records) {
  std::ostringstream os;
  os << kTelemetryHeader << '\n';
  for (const auto& r : records)
    os << r.timestamp << ',' << r.node.name << ',' << r.response_ms << ',' << r.errors_per_min << ',' << r.memory_mb
       << ',' << r.throughput << ',' << r.apdex << '\n';
  return os.str();
}

SeriesStore parse(const std::string& text, const Topology& topo) {
  std::istringstream in(text);
  return read_telemetry_csv(in, topo, "t.csv");
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(Apdex, PointCases) {
  EXPECT_DOUBLE_EQ(apdex_score({10, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(apdex_score({6, 2, 2}), 0.7);
  EXPECT_DOUBLE_EQ(apdex_score({0, 0, 5}), 0.0);
}

TEST(Apdex, ZeroSamplesIsAnError) { EXPECT_THROW(apdex_score({0, 0, 0}), Error); }

TEST(Apdex, MatchesFormulaOnRandomBuckets) {
  std::mt19937 gen(11);
  std::uniform_int_distribution<int> count(0, 500);
  for (int k = 0; k < 1000; ++k) {
    const int s = count(gen), t = count(gen), f = count(gen) + 1;
    const double expect = (s + 0.5 * t) / (s + t + f);
    const double got = apdex_score({static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(f)});
    EXPECT_NEAR(got, expect, 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(Topology, RejectsDuplicatesAndTargetUpstream) {
  Topology t = small_topology(2);
  EXPECT_NO_THROW(t.validate());
  t.upstream.push_back({"up0"});
  EXPECT_THROW(t.validate(), Error);
  t = small_topology(2);
  t.upstream.push_back({"ndoc"});
  EXPECT_THROW(t.validate(), Error);
  t = small_topology(1);
  t.upstream.push_back({""});
  EXPECT_THROW(t.validate(), Error);
}

TEST(Topology, JsonRoundTrip) {
  const auto t = small_topology(3);
  EXPECT_EQ(topology_from_json(topology_to_json(t)), t);
  EXPECT_THROW(topology_from_json(nlohmann::json{{"target", "a"}}), Error);
}

TEST(Ingest, OneDayFourteenNodes) {
  Topology topo = small_topology(13);
  const auto store = parse(to_csv(make_records(topo, 25771680, 1440)), topo);
  EXPECT_EQ(store.nodes().size(), 14u);
  for (const auto& n : store.nodes()) EXPECT_EQ(store.series(n).size(), 1440u);
  EXPECT_EQ(store.minutes(), 1440u);
  EXPECT_EQ(store.gaps_filled(), 0u);
}

TEST(Ingest, MissingNodeIsNamed) {
  Topology topo;
  topo.target = {"ndoc"};
  topo.upstream = {{"ret"}, {"lo"}};
  Topology without_ret;
  without_ret.target = {"ndoc"};
  without_ret.upstream = {{"lo"}};
  const auto text = to_csv(make_records(without_ret, 0, 30));
  const auto msg = error_of([&] { parse(text, topo); });
  EXPECT_NE(msg.find("'ret'"), std::string::npos) << msg;
}

TEST(Ingest, ApdexOutOfRangeReportsLine) {
  const auto topo = small_topology(1);
  auto records = make_records(topo, 0, 5);
  records[5].apdex = 1.3;  // header is line 1, so this is line 7
  const auto msg = error_of([&] { parse(to_csv(records), topo); });
  EXPECT_NE(msg.find("t.csv:7:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("apdex"), std::string::npos) << msg;
}

TEST(Ingest, MalformedRowReportsLine) {
  const auto topo = small_topology(1);
  auto text = to_csv(make_records(topo, 0, 3));
  text += "3,ndoc,abc,1,1,1,0.9\n";
  const auto msg = error_of([&] { parse(text, topo); });
  EXPECT_NE(msg.find("t.csv:8:"), std::string::npos) << msg;

  const auto msg2 = error_of([&] { parse(to_csv(make_records(topo, 0, 2)) + "2,ndoc,1,1\n", topo); });
  EXPECT_NE(msg2.find("t.csv:6:"), std::string::npos) << msg2;
}

TEST(Ingest, NonMonotoneTimestamps) {
  const auto topo = small_topology(1);
  auto records = make_records(topo, 0, 4);
  std::swap(records[2], records[4]);  // ndoc minute 2 before ndoc minute 1
  const auto msg = error_of([&] { parse(to_csv(records), topo); });
  EXPECT_NE(msg.find("not after"), std::string::npos) << msg;
}

TEST(Ingest, NegativeMetricRejected) {
  const auto topo = small_topology(1);
  auto records = make_records(topo, 0, 3);
  records[1].errors_per_min = -1.0;
  EXPECT_THROW(parse(to_csv(records), topo), Error);
}

TEST(Ingest, HeaderRequired) {
  const auto topo = small_topology(1);
  EXPECT_THROW(parse("0,ndoc,1,1,1,1,0.9\n", topo), Error);
  EXPECT_THROW(parse("", topo), Error);
}

TEST(Ingest, CommentLinesSkipped) {
  const auto topo = small_topology(1);
  const auto store = parse("# seed=1\n" + to_csv(make_records(topo, 0, 10)), topo);
  EXPECT_EQ(store.minutes(), 10u);
}

TEST(Ingest, UnreadableFile) { EXPECT_THROW(ingest_csv("/nonexistent/x.csv", small_topology(1)), Error); }

TEST(Gaps, ShortGapInterpolated) {
  const auto topo = small_topology(1);
  auto records = make_records(topo, 0, 10, [](MetricRecord& r) { r.response_ms = 10.0 * static_cast<double>(r.timestamp); });
  // Drop minutes 3,4,5 of ndoc.
  std::erase_if(records, [](const MetricRecord& r) { return r.node.name == "ndoc" && r.timestamp >= 3 && r.timestamp <= 5; });
  const auto store = SeriesStore::from_records(records, topo);
  EXPECT_EQ(store.gaps_filled(), 3u);
  ASSERT_EQ(store.series("ndoc").size(), 10u);
  for (std::int64_t t = 0; t < 10; ++t) {
    EXPECT_EQ(store.at("ndoc", t).timestamp, t);
    EXPECT_NEAR(store.at("ndoc", t).response_ms, 10.0 * static_cast<double>(t), 1e-9);
  }
}

TEST(Gaps, LongGapRejected) {
  const auto topo = small_topology(1);
  auto records = make_records(topo, 0, 10);
  std::erase_if(records, [](const MetricRecord& r) { return r.node.name == "up0" && r.timestamp >= 2 && r.timestamp <= 5; });
  const auto msg = error_of([&] { SeriesStore::from_records(records, topo); });
  EXPECT_NE(msg.find("gap of 4 minutes"), std::string::npos) << msg;
}

TEST(Gaps, RaggedEdgesRejected) {
  const auto topo = small_topology(1);
  auto records = make_records(topo, 0, 10);
  std::erase_if(records, [](const MetricRecord& r) { return r.node.name == "up0" && r.timestamp == 9; });
  EXPECT_THROW(SeriesStore::from_records(records, topo), Error);
}

TEST(Store, ValidationIsIdempotent) {
  const auto topo = small_topology(2);
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(1.0, 500.0);
  auto records = make_records(topo, 100, 60, [&](MetricRecord& r) { r.response_ms = u(gen); });
  std::erase_if(records, [](const MetricRecord& r) { return r.timestamp == 120 || r.timestamp == 121; });
  const auto once = SeriesStore::from_records(records, topo);
  const auto twice = SeriesStore::from_records(once.records(), topo);
  EXPECT_EQ(once, twice);
  EXPECT_EQ(twice.gaps_filled(), 0u);
}

TEST(Store, CsvRoundTrip) {
  const auto topo = small_topology(2);
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto store = make_store(topo, 50, [&](MetricRecord& r) {
    r.response_ms = 1000.0 * u(gen);
    r.apdex = u(gen);
  });
  std::stringstream ss;
  write_telemetry_csv(store, ss);
  EXPECT_EQ(read_telemetry_csv(ss, topo), store);
}

TEST(Windowize, OneDayGives144Windows) {
  const auto topo = small_topology(2);
  const auto ws = windowize(make_store(topo, 1440), 10);
  EXPECT_EQ(ws.size(), 144u);
  for (const auto& n : topo.node_names()) EXPECT_EQ(ws.series(n).size(), 144u);
}

TEST(Windowize, ConstantSeries) {
  const auto topo = small_topology(1);
  const auto ws = windowize(make_store(topo, 100, [](MetricRecord& r) { r.response_ms = 321.5; }), 10);
  for (const auto& w : ws.series("ndoc")) {
    EXPECT_EQ(w.response_mean, 321.5);
    EXPECT_EQ(w.response_max, 321.5);
    EXPECT_DOUBLE_EQ(w.apdex, 0.9);
  }
}

TEST(Windowize, MeanAndMax) {
  const auto topo = small_topology(1);
  const auto ws = windowize(make_store(topo, 10, [](MetricRecord& r) { r.response_ms = r.timestamp == 7 ? 900.0 : 100.0; }));
  ASSERT_EQ(ws.size(), 1u);
  EXPECT_DOUBLE_EQ(ws.series("ndoc")[0].response_mean, 180.0);
  EXPECT_DOUBLE_EQ(ws.series("ndoc")[0].response_max, 900.0);
}

TEST(Windowize, CountIsFloorAndMaxAtLeastMean) {
  const auto topo = small_topology(1);
  std::mt19937 gen(9);
  std::lognormal_distribution<double> ln(5.0, 1.0);
  for (std::size_t minutes : {1u, 9u, 10u, 11u, 59u, 137u}) {
    for (int window : {1, 3, 10, 15}) {
      const auto store = make_store(topo, minutes, [&](MetricRecord& r) { r.response_ms = ln(gen); });
      const auto ws = windowize(store, window);
      EXPECT_EQ(ws.size(), minutes / static_cast<std::size_t>(window));
      for (const auto& w : ws.series("ndoc")) EXPECT_GE(w.response_max, w.response_mean);
    }
  }
}

TEST(Windowize, EmptyStore) { EXPECT_THROW(windowize(SeriesStore{}), Error); }

}  // namespace
}  // namespace spike
