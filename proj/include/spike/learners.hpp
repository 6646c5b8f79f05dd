#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "spike/detail/parallel.hpp"
#include "spike/detail/random.hpp"
#include "spike/error.hpp"
#include "spike/features.hpp"

namespace spike {

/// min_samples_split is either an absolute row count (integer >= 2) or a
/// fraction of the training rows in (0,1], resolved as ceil(fraction * n).
struct CartParams {
  double min_samples_split = 2.0;
  std::optional<int> max_depth;  // absent = unlimited

  void validate() const {
    const double v = min_samples_split;
    const bool fraction = v > 0.0 && v <= 1.0;
    const bool count = v >= 2.0 && std::floor(v) == v;
    if (!fraction && !count)
      throw Error("min_samples_split must be an integer >= 2 or a fraction in (0,1], got " + detail::format_number(v));
    if (max_depth && *max_depth < 1) throw Error("max_depth must be >= 1");
  }

  std::size_t resolve_min_samples_split(std::size_t n_rows) const {
    if (min_samples_split <= 1.0) {
      const double rows = std::ceil(min_samples_split * static_cast<double>(n_rows) - 1e-9);
      return std::max<std::size_t>(2, static_cast<std::size_t>(rows));
    }
    return static_cast<std::size_t>(min_samples_split);
  }

  bool operator==(const CartParams&) const = default;
};

/// Leaves have feature < 0. Internal nodes also keep the mean and count of
/// the rows that reached them.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double prediction = 0.0;
  std::size_t n = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Regression tree stored in preorder; nodes[0] is the root. Rows with
/// x[feature] <= threshold go left.
struct RegressionTree {
  std::vector<std::string> layout;
  std::vector<TreeNode> nodes;
  CartParams params;

  double predict(std::span<const double> x) const {
    if (x.size() != layout.size())
      throw Error("predict: expected " + std::to_string(layout.size()) + " features, got " + std::to_string(x.size()));
    std::size_t k = 0;
    while (!nodes[k].is_leaf())
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[k].feature)] <= nodes[k].threshold ? nodes[k].left
                                                                                                         : nodes[k].right);
    return nodes[k].prediction;
  }

  std::size_t depth() const { return depth_from(0); }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
  }

  bool operator==(const RegressionTree&) const = default;

 private:
  std::size_t depth_from(std::size_t k) const {
    if (nodes[k].is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(nodes[k].left)),
                        depth_from(static_cast<std::size_t>(nodes[k].right)));
  }
};

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double child_sse = std::numeric_limits<double>::infinity();
};

/// Greedy variance-reduction growth shared by CART and forest members.
/// `pick` fills the candidate features for a node in ascending order.
template <class PickFeatures>
class TreeGrower {
 public:
  TreeGrower(const std::vector<std::vector<double>>& cols, const std::vector<double>& y, const CartParams& params,
             std::size_t min_split, PickFeatures& pick)
      : cols_(cols), y_(y), params_(params), min_split_(min_split), pick_(pick) {}

  std::vector<TreeNode> grow(std::vector<std::size_t> rows) {
    build(rows, 0);
    return std::move(nodes_);
  }

 private:
  int build(std::vector<std::size_t>& rows, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0;
    double lo = y_[rows.front()], hi = lo;
    for (auto r : rows) {
      sum += y_[r];
      lo = std::min(lo, y_[r]);
      hi = std::max(hi, y_[r]);
    }
    const double mean = sum / static_cast<double>(rows.size());
    nodes_[index].prediction = mean;
    nodes_[index].n = rows.size();

    if (lo == hi) return index;
    if (params_.max_depth && depth >= *params_.max_depth) return index;
    if (rows.size() < min_split_) return index;

    pick_(features_);
    const SplitChoice best = best_split(rows, mean);
    if (best.feature < 0) return index;

    std::vector<std::size_t> left, right;
    const auto& col = cols_[static_cast<std::size_t>(best.feature)];
    for (auto r : rows) (col[r] <= best.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes_[index].feature = best.feature;
    nodes_[index].threshold = best.threshold;
    const int l = build(left, depth + 1);
    nodes_[index].left = l;
    const int r = build(right, depth + 1);
    nodes_[index].right = r;
    return index;
  }

  // Labels are centred on the node mean before summing squares.
  SplitChoice best_split(const std::vector<std::size_t>& rows, double mean) {
    SplitChoice best;
    const std::size_t m = rows.size();
    double total_s = 0.0, total_sq = 0.0;
    for (auto r : rows) {
      const double c = y_[r] - mean;
      total_s += c;
      total_sq += c * c;
    }
    sorted_.resize(m);
    for (std::size_t f : features_) {
      const auto& col = cols_[f];
      for (std::size_t k = 0; k < m; ++k) sorted_[k] = {col[rows[k]], y_[rows[k]] - mean};
      std::sort(sorted_.begin(), sorted_.end());
      double s = 0.0, sq = 0.0;
      for (std::size_t k = 1; k < m; ++k) {
        s += sorted_[k - 1].second;
        sq += sorted_[k - 1].second * sorted_[k - 1].second;
        const double a = sorted_[k - 1].first;
        const double b = sorted_[k].first;
        if (!(a < b)) continue;
        const double nl = static_cast<double>(k);
        const double nr = static_cast<double>(m - k);
        const double sr = total_s - s;
        const double sqr = total_sq - sq;
        const double sse = std::max(0.0, sq - s * s / nl) + std::max(0.0, sqr - sr * sr / nr);
        if (best.feature < 0 || sse < best.child_sse - 1e-12 * (1.0 + best.child_sse)) {
          double thr = a + (b - a) / 2.0;
          if (!(thr < b)) thr = a;
          best = {static_cast<int>(f), thr, sse};
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& cols_;
  const std::vector<double>& y_;
  const CartParams& params_;
  std::size_t min_split_;
  PickFeatures& pick_;
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, double>> sorted_;
};

inline void to_columns(const Dataset& ds, std::vector<std::vector<double>>& cols, std::vector<double>& y) {
  cols.assign(ds.dims(), std::vector<double>(ds.size()));
  y.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ex = ds.examples[i];
    if (ex.x.size() != ds.dims()) throw Error("dataset row " + std::to_string(i) + " does not match the layout");
    for (std::size_t f = 0; f < ex.x.size(); ++f) cols[f][i] = ex.x[f];
    y[i] = ex.y;
  }
}

}  // namespace detail

/// Greedy CART regression tree: each split maximizes the reduction in label
/// variance; thresholds are midpoints between consecutive distinct values.
/// Ties go to the lowest feature index, then the lowest threshold.
inline RegressionTree fit_cart(const Dataset& ds, const CartParams& params = {}) {
  params.validate();
  if (ds.empty()) throw Error("fit_cart: empty dataset");
  std::vector<std::vector<double>> cols;
  std::vector<double> y;
  detail::to_columns(ds, cols, y);
  auto all = [d = ds.dims()](std::vector<std::size_t>& out) {
    out.resize(d);
    for (std::size_t f = 0; f < d; ++f) out[f] = f;
  };
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  detail::TreeGrower grower(cols, y, params, params.resolve_min_samples_split(ds.size()), all);
  return {ds.layout, grower.grow(std::move(rows)), params};
}

struct ForestParams {
  int n_estimators = 10;
  double min_samples_split = 2.0;
  std::optional<int> max_depth;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  std::optional<std::size_t> max_features;  // absent = ceil(sqrt(d))

  CartParams cart() const { return {min_samples_split, max_depth}; }

  void validate() const {
    if (n_estimators < 1) throw Error("n_estimators must be >= 1");
    cart().validate();
    if (max_features && *max_features < 1) throw Error("max_features must be >= 1");
  }

  bool operator==(const ForestParams&) const = default;
};

struct ForestModel {
  std::vector<std::string> layout;
  std::vector<RegressionTree> trees;
  ForestParams params;

  /// Mean of the member predictions.
  double predict(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }

  bool operator==(const ForestModel&) const = default;
};

/// Each member is grown on a bootstrap sample with a fresh feature subset at
/// every split. Member t draws from a seed derived from (seed, t), so the
/// forest is identical for any thread count.
inline ForestModel fit_forest(const Dataset& ds, const ForestParams& params = {}, unsigned threads = 1) {
  params.validate();
  if (ds.empty()) throw Error("fit_forest: empty dataset");
  std::vector<std::vector<double>> cols;
  std::vector<double> y;
  detail::to_columns(ds, cols, y);
  const std::size_t d = ds.dims();
  const std::size_t n = ds.size();
  const std::size_t mtry = std::clamp<std::size_t>(
      params.max_features.value_or(static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))))), 1, d);
  const CartParams cart = params.cart();
  const std::size_t min_split = cart.resolve_min_samples_split(n);

  ForestModel model{ds.layout, std::vector<RegressionTree>(static_cast<std::size_t>(params.n_estimators)), params};
  detail::parallel_for(model.trees.size(), threads, [&](std::size_t t) {
    detail::Rng rng(detail::derive_seed(params.seed, t));
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = params.bootstrap ? rng.index(n) : i;
    std::vector<std::size_t> perm(d);
    auto pick = [&](std::vector<std::size_t>& out) {
      for (std::size_t f = 0; f < d; ++f) perm[f] = f;
      for (std::size_t k = 0; k < mtry && k + 1 < d; ++k) std::swap(perm[k], perm[k + rng.index(d - k)]);
      out.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(mtry));
      std::sort(out.begin(), out.end());
    };
    detail::TreeGrower grower(cols, y, cart, min_split, pick);
    model.trees[t] = {ds.layout, grower.grow(std::move(rows)), cart};
  });
  return model;
}

struct LogisticParams {
  double spike_threshold_ms = 470.0;
  int epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  double decision_threshold = 0.5;

  void validate() const {
    if (epochs < 1) throw Error("logistic: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("logistic: learning_rate must be positive");
    if (!(l2 >= 0.0)) throw Error("logistic: l2 must be >= 0");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
      throw Error("logistic: decision_threshold must be in (0,1)");
  }

  bool operator==(const LogisticParams&) const = default;
};

/// Spike / no-spike classifier. predict() takes raw features and returns
/// the spike probability.
struct LogisticModel {
  std::vector<std::string> layout;
  std::vector<double> weights;
  double bias = 0.0;
  Normalization normalization;
  LogisticParams params;

  double predict(std::span<const double> x) const {
    if (x.size() != layout.size())
      throw Error("predict: expected " + std::to_string(layout.size()) + " features, got " + std::to_string(x.size()));
    double z = bias;
    for (std::size_t f = 0; f < x.size(); ++f) z += weights[f] * normalization.scale(f, x[f]);
    return 1.0 / (1.0 + std::exp(-z));
  }

  bool alarm(std::span<const double> x) const { return predict(x) > params.decision_threshold; }

  bool operator==(const LogisticModel&) const = default;
};

/// Scaled design matrix and 0/1 targets.
struct LogisticData {
  std::vector<std::vector<double>> x;
  std::vector<double> t;
};

struct LogisticGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

namespace detail {
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
}  // namespace detail

/// Mean binary cross-entropy plus (l2/2)|w|^2; the bias is not penalized.
inline double logistic_objective(std::span<const double> w, double b, const LogisticData& data, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    double z = b;
    for (std::size_t f = 0; f < w.size(); ++f) z += w[f] * data.x[i][f];
    loss += detail::softplus(z) - data.t[i] * z;
  }
  loss /= static_cast<double>(data.x.size());
  double reg = 0.0;
  for (double v : w) reg += v * v;
  return loss + 0.5 * l2 * reg;
}

inline LogisticGradient logistic_gradient(std::span<const double> w, double b, const LogisticData& data, double l2) {
  LogisticGradient g{std::vector<double>(w.size(), 0.0), 0.0};
  const double n = static_cast<double>(data.x.size());
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    double z = b;
    for (std::size_t f = 0; f < w.size(); ++f) z += w[f] * data.x[i][f];
    const double r = 1.0 / (1.0 + std::exp(-z)) - data.t[i];
    for (std::size_t f = 0; f < w.size(); ++f) g.weights[f] += r * data.x[i][f];
    g.bias += r;
  }
  for (std::size_t f = 0; f < w.size(); ++f) g.weights[f] = g.weights[f] / n + l2 * w[f];
  g.bias /= n;
  return g;
}

/// Full-batch gradient descent from zero weights. Labels are binarized as
/// y > spike_threshold_ms. Features are min-max scaled with the dataset's
/// stored normalization, or one fitted here when absent.
inline LogisticModel fit_logistic(const Dataset& ds, const LogisticParams& params = {}) {
  params.validate();
  if (ds.empty()) throw Error("fit_logistic: empty dataset");
  LogisticModel model;
  model.layout = ds.layout;
  model.params = params;
  LogisticData data;
  std::size_t positives = 0;
  if (ds.normalization) {
    model.normalization = *ds.normalization;
    for (const auto& ex : ds.examples) data.x.push_back(ex.x);
  } else {
    model.normalization = fit_normalization(ds);
    for (const auto& ex : ds.examples) data.x.push_back(model.normalization.apply(ex.x));
  }
  for (const auto& ex : ds.examples) {
    const bool spike = ex.y > params.spike_threshold_ms;
    positives += spike;
    data.t.push_back(spike ? 1.0 : 0.0);
  }
  if (positives == 0 || positives == ds.size())
    throw Error("fit_logistic: training data contains a single class (" + std::to_string(positives) + " of " +
                std::to_string(ds.size()) + " above " + detail::format_number(params.spike_threshold_ms) + " ms)");
  model.weights.assign(ds.dims(), 0.0);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const auto g = logistic_gradient(model.weights, model.bias, data, params.l2);
    for (std::size_t f = 0; f < model.weights.size(); ++f) model.weights[f] -= params.learning_rate * g.weights[f];
    model.bias -= params.learning_rate * g.bias;
  }
  for (double w : model.weights)
    if (!std::isfinite(w)) throw Error("fit_logistic: weights diverged; lower the learning rate");
  return model;
}

// ---------------------------------------------------------------------------
// Learner selection

enum class LearnerKind { cart, forest, logistic };

inline std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::cart: return "cart";
    case LearnerKind::forest: return "forest";
    case LearnerKind::logistic: return "logistic";
  }
  return "?";
}

inline LearnerKind parse_learner(std::string_view s) {
  if (s == "cart") return LearnerKind::cart;
  if (s == "forest") return LearnerKind::forest;
  if (s == "logistic") return LearnerKind::logistic;
  throw Error("unknown learner '" + std::string(s) + "' (expected cart, forest or logistic)");
}

struct LearnerSpec {
  LearnerKind kind = LearnerKind::cart;
  CartParams cart;
  ForestParams forest;
  LogisticParams logistic;

  bool operator==(const LearnerSpec&) const = default;
};

using AnyModel = std::variant<RegressionTree, ForestModel, LogisticModel>;

inline AnyModel fit_model(const LearnerSpec& spec, const Dataset& ds) {
  switch (spec.kind) {
    case LearnerKind::cart: return fit_cart(ds, spec.cart);
    case LearnerKind::forest: return fit_forest(ds, spec.forest);
    case LearnerKind::logistic: return fit_logistic(ds, spec.logistic);
  }
  throw Error("unknown learner");
}

/// Response-time estimate for trees and forests; spike probability for the
/// logistic model.
inline double predict(const AnyModel& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

/// Learner and hyperparameters a model was trained with.
inline LearnerSpec spec_of(const AnyModel& model) {
  LearnerSpec s;
  if (const auto* t = std::get_if<RegressionTree>(&model)) {
    s.kind = LearnerKind::cart;
    s.cart = t->params;
  } else if (const auto* f = std::get_if<ForestModel>(&model)) {
    s.kind = LearnerKind::forest;
    s.forest = f->params;
    s.cart = f->params.cart();
  } else {
    s.kind = LearnerKind::logistic;
    s.logistic = std::get<LogisticModel>(model).params;
  }
  return s;
}

/// Regressors alarm when the predicted response exceeds alarm_threshold_ms;
/// the logistic model uses its own probability cutoff.
inline bool raises_alarm(const AnyModel& model, std::span<const double> x, double alarm_threshold_ms) {
  if (const auto* lg = std::get_if<LogisticModel>(&model)) return lg->alarm(x);
  return predict(model, x) > alarm_threshold_ms;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline nlohmann::json optional_int(const std::optional<int>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<int> read_optional_int(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<int>();
}

inline nlohmann::json nodes_to_json(const std::vector<TreeNode>& nodes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& n : nodes)
    arr.push_back({{"feature", n.feature},
                   {"threshold", n.threshold},
                   {"left", n.left},
                   {"right", n.right},
                   {"prediction", n.prediction},
                   {"n", n.n}});
  return arr;
}

inline std::vector<TreeNode> nodes_from_json(const nlohmann::json& arr, std::size_t dims) {
  std::vector<TreeNode> nodes;
  for (const auto& j : arr) {
    TreeNode n;
    n.feature = j.at("feature").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.left = j.at("left").get<int>();
    n.right = j.at("right").get<int>();
    n.prediction = j.at("prediction").get<double>();
    n.n = j.at("n").get<std::size_t>();
    nodes.push_back(n);
  }
  if (nodes.empty()) throw Error("model: tree has no nodes");
  const int count = static_cast<int>(nodes.size());
  for (int k = 0; k < count; ++k) {
    const auto& n = nodes[static_cast<std::size_t>(k)];
    if (n.is_leaf()) continue;
    if (static_cast<std::size_t>(n.feature) >= dims || n.left <= k || n.right <= k || n.left >= count ||
        n.right >= count)
      throw Error("model: malformed tree node " + std::to_string(k));
  }
  return nodes;
}

inline nlohmann::json cart_params_json(const CartParams& p) {
  return {{"min_samples_split", p.min_samples_split}, {"max_depth", optional_int(p.max_depth)}};
}

inline CartParams cart_params_from(const nlohmann::json& j) {
  return {j.at("min_samples_split").get<double>(), read_optional_int(j.at("max_depth"))};
}

}  // namespace detail

inline nlohmann::json model_to_json(const AnyModel& model) {
  if (const auto* t = std::get_if<RegressionTree>(&model)) {
    return {{"kind", "cart"},
            {"layout", t->layout},
            {"params", detail::cart_params_json(t->params)},
            {"nodes", detail::nodes_to_json(t->nodes)}};
  }
  if (const auto* f = std::get_if<ForestModel>(&model)) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f->trees) trees.push_back({{"nodes", detail::nodes_to_json(t.nodes)}});
    const auto& p = f->params;
    return {{"kind", "forest"},
            {"layout", f->layout},
            {"params",
             {{"n_estimators", p.n_estimators},
              {"min_samples_split", p.min_samples_split},
              {"max_depth", detail::optional_int(p.max_depth)},
              {"seed", p.seed},
              {"bootstrap", p.bootstrap},
              {"max_features", p.max_features ? nlohmann::json(*p.max_features) : nlohmann::json(nullptr)}}},
            {"trees", trees}};
  }
  const auto& lg = std::get<LogisticModel>(model);
  const auto& p = lg.params;
  return {{"kind", "logistic"},
          {"layout", lg.layout},
          {"weights", lg.weights},
          {"bias", lg.bias},
          {"normalization", {{"min", lg.normalization.min}, {"max", lg.normalization.max}}},
          {"params",
           {{"spike_threshold_ms", p.spike_threshold_ms},
            {"epochs", p.epochs},
            {"learning_rate", p.learning_rate},
            {"l2", p.l2},
            {"decision_threshold", p.decision_threshold}}}};
}

inline AnyModel model_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    const auto layout = j.at("layout").get<std::vector<std::string>>();
    if (kind == "cart") {
      RegressionTree t{layout, detail::nodes_from_json(j.at("nodes"), layout.size()),
                       detail::cart_params_from(j.at("params"))};
      t.params.validate();
      return t;
    }
    if (kind == "forest") {
      const auto& p = j.at("params");
      ForestModel f;
      f.layout = layout;
      f.params.n_estimators = p.at("n_estimators").get<int>();
      f.params.min_samples_split = p.at("min_samples_split").get<double>();
      f.params.max_depth = detail::read_optional_int(p.at("max_depth"));
      f.params.seed = p.at("seed").get<std::uint64_t>();
      f.params.bootstrap = p.at("bootstrap").get<bool>();
      if (!p.at("max_features").is_null()) f.params.max_features = p.at("max_features").get<std::size_t>();
      f.params.validate();
      for (const auto& t : j.at("trees"))
        f.trees.push_back({layout, detail::nodes_from_json(t.at("nodes"), layout.size()), f.params.cart()});
      if (f.trees.empty()) throw Error("model: forest has no trees");
      return f;
    }
    if (kind == "logistic") {
      LogisticModel lg;
      lg.layout = layout;
      lg.weights = j.at("weights").get<std::vector<double>>();
      lg.bias = j.at("bias").get<double>();
      lg.normalization.min = j.at("normalization").at("min").get<std::vector<double>>();
      lg.normalization.max = j.at("normalization").at("max").get<std::vector<double>>();
      const auto& p = j.at("params");
      lg.params.spike_threshold_ms = p.at("spike_threshold_ms").get<double>();
      lg.params.epochs = p.at("epochs").get<int>();
      lg.params.learning_rate = p.at("learning_rate").get<double>();
      lg.params.l2 = p.at("l2").get<double>();
      lg.params.decision_threshold = p.at("decision_threshold").get<double>();
      if (lg.weights.size() != layout.size() || lg.normalization.min.size() != layout.size() ||
          lg.normalization.max.size() != layout.size())
        throw Error("model: logistic dimensions do not match the layout");
      return lg;
    }
    throw Error("model: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model: ") + e.what());
  }
}

/// FNV-1a over the compact JSON form; identifies a trained model.
inline std::string model_fingerprint(const AnyModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : model_to_json(model).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Text export

namespace detail {

inline std::string short_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline void export_node(const RegressionTree& t, std::size_t k, const std::string& prefix, const std::string& branch,
                        double spike_threshold_ms, std::ostringstream& out) {
  const auto& n = t.nodes[k];
  out << prefix << branch;
  if (n.is_leaf()) {
    out << "value " << short_number(n.prediction) << " (n=" << n.n << ")";
    if (n.prediction > spike_threshold_ms) out << " [SPIKE]";
    out << '\n';
    return;
  }
  out << t.layout[static_cast<std::size_t>(n.feature)] << " <= " << short_number(n.threshold) << " (n=" << n.n
      << ")\n";
  std::string child_prefix = prefix;
  if (!branch.empty()) child_prefix += branch.rfind("|--", 0) == 0 ? "|   " : "    ";
  export_node(t, static_cast<std::size_t>(n.left), child_prefix, "|-- yes: ", spike_threshold_ms, out);
  export_node(t, static_cast<std::size_t>(n.right), child_prefix, "`-- no:  ", spike_threshold_ms, out);
}

}  // namespace detail

/// One line per node, children indented under their parent. Leaves whose
/// prediction exceeds the spike threshold are tagged "[SPIKE]".
inline std::string export_tree(const RegressionTree& t, double spike_threshold_ms = 470.0) {
  std::ostringstream out;
  detail::export_node(t, 0, "", "", spike_threshold_ms, out);
  return out.str();
}

}  // namespace spike
