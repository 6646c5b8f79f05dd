#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spike/detail/parallel.hpp"
#include "spike/detail/random.hpp"
#include "spike/error.hpp"
#include "spike/features.hpp"
#include "spike/learners.hpp"
#include "spike/resample.hpp"

namespace spike {

struct DEConfig {
  int np = 20;
  double f = 0.75;
  double cr = 0.3;
  int gen = 10;
  std::uint64_t seed = 0;
  // Objective evaluations within a generation may run concurrently; the
  // objective must then be thread-safe. Results match the serial schedule.
  unsigned threads = 1;

  void validate() const {
    if (np < 4) throw Error("DE: np must be >= 4");
    if (!(f > 0.0)) throw Error("DE: f must be > 0");
    if (!(cr >= 0.0 && cr <= 1.0)) throw Error("DE: cr must be in [0,1]");
    if (gen < 1) throw Error("DE: gen must be >= 1");
  }
};

enum class ParamKind { continuous, integer };

struct ParamDim {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  ParamKind kind = ParamKind::continuous;
};

struct ParamSpace {
  std::vector<ParamDim> dims;

  void validate() const {
    if (dims.empty()) throw Error("parameter space is empty");
    for (const auto& d : dims)
      if (!(d.lower < d.upper)) throw Error("parameter '" + d.name + "': lower bound must be below upper bound");
  }

  std::size_t size() const { return dims.size(); }

  /// Integer-kind values are rounded here, and only here.
  std::vector<double> decode(std::span<const double> values) const {
    std::vector<double> out(values.begin(), values.end());
    for (std::size_t k = 0; k < dims.size(); ++k)
      if (dims[k].kind == ParamKind::integer) out[k] = std::clamp(std::round(out[k]), dims[k].lower, dims[k].upper);
    return out;
  }
};

/// (recall, precision), compared lexicographically. Undefined metrics and
/// failed evaluations score -infinity.
struct Score {
  double recall = -std::numeric_limits<double>::infinity();
  double precision = -std::numeric_limits<double>::infinity();

  static Score failed() { return {}; }

  friend bool operator<(const Score& a, const Score& b) {
    if (a.recall != b.recall) return a.recall < b.recall;
    return a.precision < b.precision;
  }
  bool operator==(const Score&) const = default;
};

struct Candidate {
  std::vector<double> values;
  Score score;
};

/// DE/rand/1/bin trial for target x: each dimension takes
/// a_k + f (b_k - c_k), clamped to bounds, with probability cr, otherwise
/// keeps x_k. One uniformly chosen dimension always takes the mutant value.
inline Candidate mutate_crossover(const Candidate& x, const Candidate& a, const Candidate& b, const Candidate& c,
                                  const ParamSpace& space, const DEConfig& cfg, detail::Rng& rng) {
  const std::size_t dims = space.size();
  const std::size_t forced = rng.index(dims);
  Candidate trial{x.values, Score::failed()};
  for (std::size_t k = 0; k < dims; ++k) {
    const bool take = rng.uniform() < cfg.cr;
    if (!take && k != forced) continue;
    const double y = a.values[k] + cfg.f * (b.values[k] - c.values[k]);
    trial.values[k] = std::clamp(y, space.dims[k].lower, space.dims[k].upper);
  }
  return trial;
}

struct DEResult {
  Candidate best;
  std::vector<Score> trace;  // best score after initialization, then after each generation
  std::size_t evaluations = 0;
  std::vector<std::string> failures;
  std::vector<Candidate> population;
};

using Objective = std::function<Score(std::span<const double>)>;

/// Differential evolution maximizing (recall, precision). A member is
/// replaced only when its trial scores strictly better lexicographically.
/// Performs exactly np * (gen + 1) objective evaluations.
inline DEResult optimize(const ParamSpace& space, const Objective& objective, const DEConfig& cfg) {
  cfg.validate();
  space.validate();
  detail::Rng rng(cfg.seed);
  const auto np = static_cast<std::size_t>(cfg.np);
  DEResult res;

  auto evaluate_all = [&](std::vector<Candidate>& batch) {
    std::vector<std::string> errors(batch.size());
    detail::parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
      try {
        batch[i].score = objective(space.decode(batch[i].values));
      } catch (const std::exception& e) {
        batch[i].score = Score::failed();
        errors[i] = e.what();
      }
    });
    res.evaluations += batch.size();
    for (auto& e : errors)
      if (!e.empty()) res.failures.push_back(std::move(e));
  };
  auto best_of = [](const std::vector<Candidate>& pop) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
      if (pop[best].score < pop[i].score) best = i;
    return best;
  };

  std::vector<Candidate> pop(np);
  for (auto& c : pop) {
    c.values.resize(space.size());
    for (std::size_t k = 0; k < space.size(); ++k) c.values[k] = rng.uniform(space.dims[k].lower, space.dims[k].upper);
  }
  evaluate_all(pop);
  res.trace.push_back(pop[best_of(pop)].score);

  for (int g = 0; g < cfg.gen; ++g) {
    std::vector<Candidate> trials(np);
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t pick[3];
      for (std::size_t s = 0; s < 3; ++s) {
        std::size_t r;
        do {
          r = rng.index(np);
        } while (r == i || std::find(pick, pick + s, r) != pick + s);
        pick[s] = r;
      }
      trials[i] = mutate_crossover(pop[i], pop[pick[0]], pop[pick[1]], pop[pick[2]], space, cfg, rng);
    }
    evaluate_all(trials);
    for (std::size_t i = 0; i < np; ++i)
      if (pop[i].score < trials[i].score) pop[i] = std::move(trials[i]);
    res.trace.push_back(pop[best_of(pop)].score);
  }
  res.best = pop[best_of(pop)];
  res.population = std::move(pop);
  return res;
}

// ---------------------------------------------------------------------------
// Learner tuning

/// min_samples_split is searched as one coordinate u in [0.01, 2]:
/// u <= 1 is a fraction of rows, u > 1 maps onto the counts 2..20.
inline double decode_min_samples_split(double u) {
  if (u <= 1.0) return std::max(u, 0.01);
  return 2.0 + std::round((std::min(u, 2.0) - 1.0) * 18.0);
}

inline ParamSpace default_space(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::cart:
      return {{{"min_samples_split", 0.01, 2.0, ParamKind::continuous}, {"max_depth", 1.0, 20.0, ParamKind::integer}}};
    case LearnerKind::forest:
      return {{{"n_estimators", 10.0, 50.0, ParamKind::integer},
               {"min_samples_split", 0.01, 2.0, ParamKind::continuous},
               {"max_depth", 1.0, 20.0, ParamKind::integer}}};
    case LearnerKind::logistic:
      return {{{"learning_rate", 0.05, 2.0, ParamKind::continuous}, {"l2", 0.0, 0.1, ParamKind::continuous}}};
  }
  throw Error("unknown learner");
}

/// Writes decoded coordinates into a copy of `base`, matched by name.
/// Unknown names are an error.
inline LearnerSpec apply_params(const LearnerSpec& base, const ParamSpace& space, std::span<const double> decoded) {
  LearnerSpec spec = base;
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto& name = space.dims[k].name;
    const double v = decoded[k];
    if (name == "min_samples_split") {
      spec.cart.min_samples_split = decode_min_samples_split(v);
      spec.forest.min_samples_split = spec.cart.min_samples_split;
    } else if (name == "max_depth") {
      spec.cart.max_depth = static_cast<int>(std::lround(v));
      spec.forest.max_depth = spec.cart.max_depth;
    } else if (name == "n_estimators") {
      spec.forest.n_estimators = static_cast<int>(std::lround(v));
    } else if (name == "learning_rate") {
      spec.logistic.learning_rate = v;
    } else if (name == "l2") {
      spec.logistic.l2 = v;
    } else {
      throw Error("unknown tunable parameter '" + name + "'");
    }
  }
  return spec;
}

struct TuneResult {
  LearnerSpec spec;
  std::vector<double> decoded;
  DEResult de;
};

/// Tunes on `train` alone: fits on its first 80% (SMOTE applied there when
/// configured) and scores (recall, precision) on its last 20% with the
/// spike and alarm thresholds both at spike_threshold_ms.
inline TuneResult tune_learner(const Dataset& train, const ParamSpace& space, const LearnerSpec& base,
                               const DEConfig& cfg, const std::optional<SmoteConfig>& smote_cfg = std::nullopt,
                               double spike_threshold_ms = 470.0) {
  if (train.size() < 5) throw Error("tune: training set too small");
  for (std::size_t i = 1; i < train.size(); ++i)
    if (train.examples[i].at < train.examples[i - 1].at) throw Error("tune: training set is not time-ordered");
  const std::size_t cut = train.size() * 4 / 5;
  Dataset fit_part = train.slice(0, cut);
  const Dataset valid = train.slice(cut, train.size());
  std::size_t valid_spikes = 0;
  for (const auto& ex : valid.examples) valid_spikes += ex.y > spike_threshold_ms;
  if (valid_spikes == 0)
    throw Error("tune: the internal validation slice (last 20% of training data) has no spikes; use a longer window");
  if (smote_cfg) fit_part = smote(fit_part, *smote_cfg);

  Objective objective = [&](std::span<const double> decoded) {
    const auto spec = apply_params(base, space, decoded);
    const auto model = fit_model(spec, fit_part);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& ex : valid.examples) {
      const bool alarm = raises_alarm(model, ex.x, spike_threshold_ms);
      const bool spike = ex.y > spike_threshold_ms;
      tp += alarm && spike;
      fp += alarm && !spike;
      fn += !alarm && spike;
    }
    Score s;
    s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    return s;
  };
  TuneResult res;
  res.de = optimize(space, objective, cfg);
  res.decoded = space.decode(res.de.best.values);
  res.spec = apply_params(base, space, res.decoded);
  return res;
}

inline nlohmann::json score_json(const Score& s) {
  auto field = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"recall", field(s.recall)}, {"precision", field(s.precision)}};
}

/// Per-generation best score, final parameters and evaluation count.
inline nlohmann::json tuning_report(const TuneResult& r, const ParamSpace& space, const DEConfig& cfg) {
  nlohmann::json gens = nlohmann::json::array();
  for (std::size_t g = 0; g < r.de.trace.size(); ++g) {
    auto s = score_json(r.de.trace[g]);
    s["generation"] = g;
    gens.push_back(s);
  }
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto& name = space.dims[k].name;
    params[name] = name == "min_samples_split" ? decode_min_samples_split(r.decoded[k]) : r.decoded[k];
  }
  return {{"learner", std::string(to_string(r.spec.kind))},
          {"de", {{"np", cfg.np}, {"f", cfg.f}, {"cr", cfg.cr}, {"gen", cfg.gen}, {"seed", cfg.seed}}},
          {"generations", gens},
          {"best", score_json(r.de.best.score)},
          {"params", params},
          {"evaluations", r.de.evaluations},
          {"failures", r.de.failures}};
}

}  // namespace spike
