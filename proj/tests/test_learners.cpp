#include "spike/learners.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace spike {
namespace {

Dataset random_dataset(std::mt19937& gen, std::size_t n, std::size_t d, bool integer_features = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 6);
  Dataset ds;
  for (std::size_t f = 0; f < d; ++f) ds.layout.push_back("f" + std::to_string(f));
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.at = static_cast<std::int64_t>(i);
    for (std::size_t f = 0; f < d; ++f) ex.x.push_back(integer_features ? small(gen) : u(gen));
    ex.y = 10.0 * u(gen);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// Weighted child variance of splitting `ds` at (f, thr), computed two-pass.
double split_cost(const Dataset& ds, std::size_t f, double thr) {
  std::vector<double> l, r;
  for (const auto& ex : ds.examples) (ex.x[f] <= thr ? l : r).push_back(ex.y);
  auto sse = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double m = 0.0;
    for (double y : v) m += y;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double y : v) s += (y - m) * (y - m);
    return s;
  };
  return (sse(l) + sse(r)) / static_cast<double>(ds.size());
}

double brute_force_best(const Dataset& ds) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < ds.dims(); ++f) {
    std::set<double> values;
    for (const auto& ex : ds.examples) values.insert(ex.x[f]);
    for (auto it = values.begin(); std::next(it) != values.end(); ++it)
      best = std::min(best, split_cost(ds, f, (*it + *std::next(it)) / 2.0));
  }
  return best;
}

TEST(Cart, ConstantLabelsGiveSingleLeaf) {
  std::mt19937 gen(1);
  auto ds = random_dataset(gen, 50, 3);
  for (auto& ex : ds.examples) ex.y = 42.0;
  const auto t = fit_cart(ds);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.predict(std::vector<double>{0.1, 0.2, 0.3}), 42.0);
}

TEST(Cart, StepFunctionDepthOne) {
  Dataset ds;
  ds.layout = {"x"};
  ds.examples = {{0, {0}, 0}, {1, {1}, 0}, {2, {10}, 100}, {3, {11}, 100}};
  const auto t = fit_cart(ds, {2.0, 1});
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_GE(t.nodes[0].threshold, 1.0);
  EXPECT_LT(t.nodes[0].threshold, 10.0);
  EXPECT_EQ(t.predict(std::vector<double>{0.5}), 0.0);
  EXPECT_EQ(t.predict(std::vector<double>{10.5}), 100.0);
  EXPECT_EQ(t.depth(), 1u);
}

TEST(Cart, FractionalMinSamplesSplit) {
  CartParams p{0.61, std::nullopt};
  EXPECT_EQ(p.resolve_min_samples_split(100), 61u);
  EXPECT_EQ((CartParams{0.5, std::nullopt}).resolve_min_samples_split(7), 4u);
  EXPECT_EQ((CartParams{0.01, std::nullopt}).resolve_min_samples_split(10), 2u);
  EXPECT_EQ((CartParams{2.0, std::nullopt}).resolve_min_samples_split(1000), 2u);
  EXPECT_EQ((CartParams{1.0, std::nullopt}).resolve_min_samples_split(30), 30u);
}

TEST(Cart, ParamValidation) {
  EXPECT_THROW((CartParams{1.5, std::nullopt}).validate(), Error);
  EXPECT_THROW((CartParams{0.0, std::nullopt}).validate(), Error);
  EXPECT_THROW((CartParams{2.5, std::nullopt}).validate(), Error);
  EXPECT_THROW((CartParams{2.0, 0}).validate(), Error);
  EXPECT_NO_THROW((CartParams{20.0, 5}).validate());
  EXPECT_THROW(fit_cart(Dataset{}), Error);
}

TEST(Cart, MinSamplesSplitStopsGrowth) {
  std::mt19937 gen(2);
  const auto ds = random_dataset(gen, 100, 2);
  const auto t = fit_cart(ds, {61.0, std::nullopt});
  for (const auto& n : t.nodes) {
    if (!n.is_leaf()) {
      EXPECT_GE(n.n, 61u);
    }
  }
  EXPECT_EQ(fit_cart(ds, {0.61, std::nullopt}), (RegressionTree{t.layout, t.nodes, CartParams{0.61, std::nullopt}}));
}

TEST(Cart, RootSplitMatchesBruteForce) {
  std::mt19937 gen(123);
  std::uniform_int_distribution<std::size_t> rows(2, 200), dims(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ds = random_dataset(gen, rows(gen), dims(gen), trial % 3 == 0);
    const auto t = fit_cart(ds, {2.0, 1});
    const double oracle = brute_force_best(ds);
    if (std::isinf(oracle)) {
      EXPECT_TRUE(t.nodes[0].is_leaf());
      continue;
    }
    ASSERT_FALSE(t.nodes[0].is_leaf());
    const double got = split_cost(ds, static_cast<std::size_t>(t.nodes[0].feature), t.nodes[0].threshold);
    EXPECT_NEAR(got, oracle, 1e-9) << "trial " << trial;
  }
}

TEST(Cart, TiesGoToLowestFeatureThenThreshold) {
  Dataset ds;
  ds.layout = {"a", "b"};
  // Both features separate the labels identically.
  ds.examples = {{0, {0, 0}, 0}, {1, {1, 1}, 0}, {2, {2, 2}, 5}, {3, {3, 3}, 5}};
  const auto t = fit_cart(ds, {2.0, 1});
  EXPECT_EQ(t.nodes[0].feature, 0);
  // Symmetric labels: thresholds 0.5 and 2.5 tie; the lower one wins.
  Dataset sym;
  sym.layout = {"a"};
  sym.examples = {{0, {0}, 1}, {1, {1}, 0}, {2, {2}, 0}, {3, {3}, 1}};
  EXPECT_EQ(fit_cart(sym, {2.0, 1}).nodes[0].threshold, 0.5);
}

TEST(Cart, ZeroTrainingErrorWhenUnbounded) {
  std::mt19937 gen(5);
  const auto ds = random_dataset(gen, 150, 4);
  const auto t = fit_cart(ds);
  for (const auto& ex : ds.examples) EXPECT_DOUBLE_EQ(t.predict(ex.x), ex.y);
}

TEST(Cart, LeftChildTakesLessOrEqual) {
  Dataset ds;
  ds.layout = {"x"};
  ds.examples = {{0, {1}, 0}, {1, {2}, 10}};
  const auto t = fit_cart(ds);
  EXPECT_EQ(t.predict(std::vector<double>{t.nodes[0].threshold}), 0.0);
  EXPECT_EQ(t.predict(std::vector<double>{std::nextafter(t.nodes[0].threshold, 10.0)}), 10.0);
}

TEST(Predict, DimensionMismatch) {
  RegressionTree t{{"a", "b"}, {TreeNode{.prediction = 42.0, .n = 1}}, {}};
  EXPECT_EQ(t.predict(std::vector<double>{1, 2}), 42.0);
  EXPECT_THROW(t.predict(std::vector<double>{1}), Error);
}

TEST(Forest, MeanOfMembers) {
  ForestModel f;
  f.layout = {"x"};
  f.trees.push_back({{"x"}, {TreeNode{.prediction = 10.0, .n = 1}}, {}});
  f.trees.push_back({{"x"}, {TreeNode{.prediction = 30.0, .n = 1}}, {}});
  EXPECT_EQ(f.predict(std::vector<double>{0.0}), 20.0);
}

TEST(Forest, SingleTreeWithoutBaggingEqualsCart) {
  std::mt19937 gen(6);
  const auto ds = random_dataset(gen, 120, 4);
  ForestParams p;
  p.n_estimators = 1;
  p.bootstrap = false;
  p.max_features = 4;
  p.max_depth = 6;
  const auto f = fit_forest(ds, p);
  ASSERT_EQ(f.trees.size(), 1u);
  EXPECT_EQ(f.trees[0].nodes, fit_cart(ds, {2.0, 6}).nodes);
}

TEST(Forest, DeterministicAcrossThreads) {
  std::mt19937 gen(7);
  const auto ds = random_dataset(gen, 200, 6);
  ForestParams p;
  p.seed = 17;
  const auto a = fit_forest(ds, p, 1);
  EXPECT_EQ(a.trees.size(), 10u);
  EXPECT_EQ(a, fit_forest(ds, p, 1));
  EXPECT_EQ(a, fit_forest(ds, p, 4));
  p.seed = 18;
  EXPECT_NE(a, fit_forest(ds, p, 1));
  // Member predictions average exactly.
  for (int k = 0; k < 20; ++k) {
    const auto& x = ds.examples[static_cast<std::size_t>(k)].x;
    double s = 0.0;
    for (const auto& t : a.trees) s += t.predict(x);
    EXPECT_EQ(a.predict(x), s / static_cast<double>(a.trees.size()));
  }
}

TEST(Forest, Validation) {
  ForestParams p;
  p.n_estimators = 0;
  EXPECT_THROW(p.validate(), Error);
  std::mt19937 gen(1);
  EXPECT_THROW(fit_forest(Dataset{}, {}), Error);
}

Dataset separable() {
  Dataset ds;
  ds.layout = {"x"};
  for (int k = 0; k < 20; ++k) {
    ds.examples.push_back({2 * k, {0.0}, 100.0});
    ds.examples.push_back({2 * k + 1, {1.0}, 900.0});
  }
  return ds;
}

TEST(Logistic, SeparableTrainingAccuracy) {
  const auto ds = separable();
  const auto m = fit_logistic(ds);
  for (const auto& ex : ds.examples) EXPECT_EQ(m.alarm(ex.x), ex.y > 470.0);
  for (const auto& ex : ds.examples) {
    const double p = m.predict(ex.x);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Logistic, SingleClassIsError) {
  auto ds = separable();
  for (auto& ex : ds.examples) ex.y = 100.0;
  EXPECT_THROW(fit_logistic(ds), Error);
  for (auto& ex : ds.examples) ex.y = 1000.0;
  EXPECT_THROW(fit_logistic(ds), Error);
}

TEST(Logistic, ZeroModelPredictsHalf) {
  LogisticModel m;
  m.layout = {"a", "b"};
  m.weights = {0.0, 0.0};
  m.normalization = {{0, 0}, {1, 1}};
  EXPECT_EQ(m.predict(std::vector<double>{0.3, 0.7}), 0.5);
}

TEST(Logistic, BiasGradientZeroOnBalancedData) {
  LogisticData d;
  d.x = {{0.2, 0.9}, {0.8, 0.1}, {0.5, 0.5}, {0.5, 0.5}};
  d.t = {1, 0, 1, 0};
  const std::vector<double> w{0.0, 0.0};
  EXPECT_NEAR(logistic_gradient(w, 0.0, d, 0.0).bias, 0.0, 1e-15);
  const double h = 1e-6;
  const double fd = (logistic_objective(w, h, d, 0.0) - logistic_objective(w, -h, d, 0.0)) / (2 * h);
  EXPECT_NEAR(fd, 0.0, 1e-9);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  std::mt19937 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0), w(-2.0, 2.0);
  std::uniform_int_distribution<int> n_rows(3, 30), n_dims(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    LogisticData d;
    const int n = n_rows(gen), dims = n_dims(gen);
    for (int i = 0; i < n; ++i) {
      std::vector<double> x;
      for (int f = 0; f < dims; ++f) x.push_back(u(gen));
      d.x.push_back(x);
      d.t.push_back(u(gen) < 0.4 ? 1.0 : 0.0);
    }
    std::vector<double> weights;
    for (int f = 0; f < dims; ++f) weights.push_back(w(gen));
    const double b = w(gen), l2 = 0.1 * u(gen);
    const auto g = logistic_gradient(weights, b, d, l2);
    const double h = 1e-5;
    auto check = [&](double analytic, double fd) {
      const double rel = std::abs(analytic - fd) / std::max(1e-8, std::max(std::abs(analytic), std::abs(fd)));
      EXPECT_LT(rel, 1e-4) << "trial " << trial << " analytic " << analytic << " fd " << fd;
    };
    for (int f = 0; f < dims; ++f) {
      auto wp = weights, wm = weights;
      wp[static_cast<std::size_t>(f)] += h;
      wm[static_cast<std::size_t>(f)] -= h;
      check(g.weights[static_cast<std::size_t>(f)],
            (logistic_objective(wp, b, d, l2) - logistic_objective(wm, b, d, l2)) / (2 * h));
    }
    check(g.bias, (logistic_objective(weights, b + h, d, l2) - logistic_objective(weights, b - h, d, l2)) / (2 * h));
  }
}

TEST(Persistence, JsonRoundTripPredictsIdentically) {
  std::mt19937 gen(41);
  auto ds = random_dataset(gen, 300, 5);
  for (auto& ex : ds.examples) ex.y *= 100.0;
  ForestParams fp;
  fp.seed = 3;
  fp.max_depth = 7;
  const std::vector<AnyModel> models = {fit_cart(ds, {0.05, 8}), fit_forest(ds, fp), fit_logistic(ds)};
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (const auto& m : models) {
    const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    EXPECT_EQ(model_fingerprint(back), model_fingerprint(m));
    for (int k = 0; k < 1000; ++k) {
      std::vector<double> x;
      for (int f = 0; f < 5; ++f) x.push_back(u(gen));
      ASSERT_EQ(predict(back, x), predict(m, x));
    }
  }
}

TEST(Persistence, RejectsBadJson) {
  EXPECT_THROW(model_from_json(nlohmann::json{{"kind", "svm"}, {"layout", {"a"}}}), Error);
  EXPECT_THROW(model_from_json(nlohmann::json{{"kind", "cart"}}), Error);
  auto j = model_to_json(RegressionTree{{"a"}, {TreeNode{.prediction = 1.0, .n = 1}}, {}});
  j["nodes"][0]["feature"] = 4;
  j["nodes"][0]["left"] = 1;
  j["nodes"][0]["right"] = 2;
  EXPECT_THROW(model_from_json(j), Error);
}

TEST(Persistence, SpecOfRecoversParams) {
  std::mt19937 gen(2);
  const auto ds = random_dataset(gen, 50, 2);
  const auto t = fit_cart(ds, {0.3, 4});
  const auto s = spec_of(t);
  EXPECT_EQ(s.kind, LearnerKind::cart);
  EXPECT_EQ(s.cart, (CartParams{0.3, 4}));
}

TEST(Export, SingleLeaf) {
  const RegressionTree low{{"a"}, {TreeNode{.prediction = 42.0, .n = 3}}, {}};
  EXPECT_EQ(export_tree(low), "value 42 (n=3)\n");
  const RegressionTree high{{"a"}, {TreeNode{.prediction = 500.0, .n = 3}}, {}};
  EXPECT_EQ(export_tree(high), "value 500 (n=3) [SPIKE]\n");
}

TEST(Export, DepthOneHasThreeLines) {
  Dataset ds;
  ds.layout = {"sh-synr.as"};
  ds.examples = {{0, {0.9}, 600}, {1, {0.95}, 100}};
  const auto text = export_tree(fit_cart(ds));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text,
            "sh-synr.as <= 0.925 (n=2)\n"
            "|-- yes: value 600 (n=1) [SPIKE]\n"
            "`-- no:  value 100 (n=1)\n");
}

TEST(Export, LineCountEqualsNodeCount) {
  std::mt19937 gen(8);
  const auto ds = random_dataset(gen, 80, 3);
  const auto t = fit_cart(ds, {2.0, 5});
  const auto text = export_tree(t, 5.0);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), t.nodes.size());
  std::size_t spikes = 0;
  for (const auto& n : t.nodes) spikes += n.is_leaf() && n.prediction > 5.0;
  std::size_t marks = 0;
  for (std::size_t p = text.find("[SPIKE]"); p != std::string::npos; p = text.find("[SPIKE]", p + 1)) ++marks;
  EXPECT_EQ(marks, spikes);
}

TEST(Learners, ParseKind) {
  EXPECT_EQ(parse_learner("cart"), LearnerKind::cart);
  EXPECT_EQ(parse_learner("forest"), LearnerKind::forest);
  EXPECT_EQ(parse_learner("logistic"), LearnerKind::logistic);
  EXPECT_THROW(parse_learner("lstm"), Error);
}

}  // namespace
}  // namespace spike
