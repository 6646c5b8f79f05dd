// spike: command-line driver for the prediction pipeline.
//
//   spike generate  --days 14 --seed 1 --out telemetry.csv
//   spike featurize --in telemetry.csv --out dataset.csv
//   spike train     --data dataset.csv --learner cart --smote --tune --model-out model.json
//   spike explain   --model model.json
//   spike stage1    --data dataset.csv --learner cart --smote --tune
//   spike backtest  --in telemetry.csv --L 24 --report report.csv --params-from model.json
//   spike sweep     --report report.csv --from 370 --to 490 --step 5
//
// Shared settings may also come from a key=value file given with --config;
// command-line flags win over the file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spike/spike.hpp"

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = all cores
  double spike_threshold_ms = 470.0;
  int horizon_min = 30;
  int window_min = 10;
  double L_hours = 24.0;
  std::vector<int> lags = spike::LagSpec{}.offsets_min;
  int smote_k = 5;
  int smote_percent = 50;
  int de_np = 20;
  double de_f = 0.75;
  double de_cr = 0.3;
  int de_gen = 10;
  std::string learner = "cart";
  std::optional<double> min_samples_split;
  std::optional<int> max_depth;
  std::optional<int> n_estimators;
};

// Outputs are written to temporaries and renamed into place only when the
// whole command succeeds.
class Outputs {
 public:
  Outputs() = default;
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    for (auto& f : files_) {
      f.stream.reset();
      std::error_code ec;
      fs::remove(f.tmp, ec);
    }
  }

  std::ostream& open(const fs::path& path) {
    if (path.has_parent_path() && !fs::is_directory(path.parent_path()))
      throw spike::Error("output directory does not exist: " + path.parent_path().string());
    File f;
    f.path = path;
    f.tmp = path;
    f.tmp += ".part";
    f.stream = std::make_unique<std::ofstream>(f.tmp, std::ios::binary | std::ios::trunc);
    if (!*f.stream) throw spike::Error("cannot write " + path.string());
    files_.push_back(std::move(f));
    return *files_.back().stream;
  }

  void commit() {
    for (auto& f : files_) {
      f.stream->flush();
      if (!*f.stream) throw spike::Error("write failed: " + f.path.string());
      f.stream.reset();
    }
    for (auto& f : files_) fs::rename(f.tmp, f.path);
    files_.clear();
  }

 private:
  struct File {
    fs::path path, tmp;
    std::unique_ptr<std::ofstream> stream;
  };
  std::vector<File> files_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw spike::Error("cannot read " + path);
  return in;
}

std::string topology_beside(const std::string& input) {
  return (fs::path(input).parent_path() / "topology.json").string();
}

spike::LagSpec lag_spec(const RunConfig& rc) {
  spike::LagSpec l{rc.lags};
  l.validate();
  return l;
}

spike::SmoteConfig smote_config(const RunConfig& rc) {
  spike::SmoteConfig c;
  c.k = rc.smote_k;
  c.percent = rc.smote_percent;
  c.spike_threshold_ms = rc.spike_threshold_ms;
  c.seed = spike::detail::derive_seed(rc.seed, 1);
  c.validate();
  return c;
}

spike::DEConfig de_config(const RunConfig& rc) {
  spike::DEConfig c;
  c.np = rc.de_np;
  c.f = rc.de_f;
  c.cr = rc.de_cr;
  c.gen = rc.de_gen;
  c.seed = spike::detail::derive_seed(rc.seed, 2);
  c.threads = rc.threads ? rc.threads : spike::detail::default_threads();
  c.validate();
  return c;
}

spike::LearnerSpec learner_spec(const RunConfig& rc) {
  spike::LearnerSpec s;
  s.kind = spike::parse_learner(rc.learner);
  if (rc.min_samples_split) s.cart.min_samples_split = s.forest.min_samples_split = *rc.min_samples_split;
  if (rc.max_depth) s.cart.max_depth = s.forest.max_depth = *rc.max_depth;
  if (rc.n_estimators) s.forest.n_estimators = *rc.n_estimators;
  s.forest.seed = spike::detail::derive_seed(rc.seed, 3);
  s.logistic.spike_threshold_ms = rc.spike_threshold_ms;
  s.cart.validate();
  s.forest.validate();
  return s;
}

void warn(const std::string& msg) { std::cerr << "spike: warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------

struct GenerateArgs {
  int days = 1;
  int n_upstream = 13;
  double spike_rate = 0.034;
  double buildup_fraction = 0.5;
  std::string out, truth, topology;
};

void run_generate(const RunConfig& rc, const GenerateArgs& a) {
  spike::GenConfig cfg;
  cfg.days = a.days;
  cfg.seed = rc.seed;
  cfg.n_upstream = a.n_upstream;
  cfg.spike_rate = a.spike_rate;
  cfg.buildup_fraction = a.buildup_fraction;
  cfg.spike_threshold_ms = rc.spike_threshold_ms;
  const auto g = spike::generate(cfg);

  const fs::path dir = fs::path(a.out).parent_path();
  Outputs out;
  auto& csv = out.open(a.out);
  csv << "# spike generate seed=" << rc.seed << " days=" << a.days << " n_upstream=" << a.n_upstream
      << " spike_rate=" << spike::detail::format_number(a.spike_rate)
      << " buildup_fraction=" << spike::detail::format_number(a.buildup_fraction) << '\n';
  spike::write_telemetry_csv(g.store, csv);
  auto& truth = out.open(a.truth.empty() ? dir / "spikes_truth.csv" : fs::path(a.truth));
  truth << "# spike generate seed=" << rc.seed << '\n';
  spike::write_truth_csv(g.truth, truth);
  out.open(a.topology.empty() ? dir / "topology.json" : fs::path(a.topology))
      << spike::topology_to_json(g.topology).dump(2) << '\n';
  out.commit();
}

struct FeaturizeArgs {
  std::string in, topology, out;
};

void run_featurize(const RunConfig& rc, const FeaturizeArgs& a) {
  const auto topo = spike::load_topology(a.topology.empty() ? topology_beside(a.in) : a.topology);
  const auto store = spike::ingest_csv(a.in, topo);
  if (store.gaps_filled()) warn(std::to_string(store.gaps_filled()) + " missing minutes interpolated");
  const auto ds = spike::build_examples(store, topo, lag_spec(rc), rc.horizon_min);
  Outputs out;
  auto& csv = out.open(a.out);
  csv << "# spike featurize seed=" << rc.seed << " horizon_min=" << rc.horizon_min << '\n';
  spike::write_dataset_csv(ds, csv);
  out.commit();
}

spike::Dataset load_dataset(const std::string& path) {
  auto in = open_input(path);
  return spike::read_dataset_csv(in, std::nullopt, path);
}

struct TrainArgs {
  std::string data, model_out, tuning_report;
  bool smote = false, tune = false;
};

void run_train(const RunConfig& rc, const TrainArgs& a) {
  const auto ds = load_dataset(a.data);
  spike::LearnerSpec spec = learner_spec(rc);
  std::optional<spike::SmoteConfig> sm;
  if (a.smote) sm = smote_config(rc);

  nlohmann::json report;
  if (a.tune) {
    const auto space = spike::default_space(spec.kind);
    const auto de = de_config(rc);
    const auto tr = spike::tune_learner(ds, space, spec, de, sm, rc.spike_threshold_ms);
    for (const auto& f : tr.de.failures) warn("tuning candidate failed: " + f);
    spec = tr.spec;
    report = spike::tuning_report(tr, space, de);
    report["seed"] = rc.seed;
  }
  spike::Dataset fit = ds;
  if (sm) {
    auto r = spike::smote_with_origins(ds, *sm);
    for (const auto& w : r.warnings) warn(w);
    fit = std::move(r.data);
  }
  auto j = spike::model_to_json(spike::fit_model(spec, fit));
  j["meta"] = {{"seed", rc.seed}, {"smote", a.smote}, {"tuned", a.tune}, {"rows", ds.size()}};

  Outputs out;
  out.open(a.model_out) << j.dump(1) << '\n';
  if (a.tune) {
    const std::string path = a.tuning_report.empty() ? fs::path(a.model_out).replace_extension(".tuning.json").string()
                                                     : a.tuning_report;
    out.open(path) << report.dump(2) << '\n';
  }
  out.commit();
}

spike::AnyModel load_model(const std::string& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw spike::Error(path + ": " + e.what());
  }
  return spike::model_from_json(j);
}

struct ExplainArgs {
  std::string model, out;
};

void run_explain(const RunConfig& rc, const ExplainArgs& a) {
  const auto model = load_model(a.model);
  std::ostringstream text;
  if (const auto* t = std::get_if<spike::RegressionTree>(&model)) {
    text << spike::export_tree(*t, rc.spike_threshold_ms);
  } else if (const auto* f = std::get_if<spike::ForestModel>(&model)) {
    for (std::size_t k = 0; k < f->trees.size(); ++k)
      text << "# tree " << k << '\n' << spike::export_tree(f->trees[k], rc.spike_threshold_ms);
  } else {
    throw spike::Error("explain: logistic models have no tree to print");
  }
  if (a.out.empty()) {
    std::cout << text.str();
    return;
  }
  Outputs out;
  out.open(a.out) << text.str();
  out.commit();
}

struct Stage1Args {
  std::string data, out;
  bool smote = false, tune = false;
};

void run_stage1(const RunConfig& rc, const Stage1Args& a) {
  const auto ds = load_dataset(a.data);
  const auto spec = learner_spec(rc);
  spike::Stage1Options opt;
  opt.spike_threshold_ms = rc.spike_threshold_ms;
  if (a.smote) opt.smote = smote_config(rc);
  if (a.tune) opt.tune = de_config(rc);
  const auto r = spike::stage1(ds, spec, opt);
  for (const auto& w : r.warnings) warn(w);

  std::ostringstream row;
  row << "# spike stage1 seed=" << rc.seed << " train_rows=" << r.train_rows << " test_rows=" << r.test_rows << '\n';
  row << "learner,smote,tune,tp,fp,fn,tn,recall_pct,precision_pct\n";
  row << rc.learner << ',' << (a.smote ? "yes" : "no") << ',' << (a.tune ? "yes" : "no") << ',' << r.cm.tp << ','
      << r.cm.fp << ',' << r.cm.fn << ',' << r.cm.tn << ',' << spike::percent_or_dash(r.cm.recall()) << ','
      << spike::percent_or_dash(r.cm.precision()) << '\n';
  std::cout << row.str();
  if (!a.out.empty()) {
    Outputs out;
    out.open(a.out) << row.str();
    out.commit();
  }
}

struct BacktestArgs {
  std::string in, topology, report, params_from;
  bool smote = false;
};

void run_backtest(const RunConfig& rc, const BacktestArgs& a) {
  const auto topo = spike::load_topology(a.topology.empty() ? topology_beside(a.in) : a.topology);
  const auto store = spike::ingest_csv(a.in, topo);
  if (store.gaps_filled()) warn(std::to_string(store.gaps_filled()) + " missing minutes interpolated");
  const auto ws = spike::windowize(store, rc.window_min);

  spike::LearnerSpec spec = learner_spec(rc);
  if (!a.params_from.empty()) {
    spec = spike::spec_of(load_model(a.params_from));
    spec.forest.seed = spike::detail::derive_seed(rc.seed, 3);
  }
  std::optional<spike::SmoteConfig> sm;
  if (a.smote) sm = smote_config(rc);

  spike::BacktestOptions opt;
  opt.L_hours = rc.L_hours;
  opt.horizon_min = rc.horizon_min;
  opt.seed = rc.seed;
  opt.threads = rc.threads ? rc.threads : spike::detail::default_threads();
  const auto report = spike::Backtester(ws, topo, lag_spec(rc), spike::make_factory(spec, sm), opt).run();

  Outputs out;
  spike::write_report_csv(report, out.open(a.report));
  out.commit();
}

struct SweepArgs {
  std::string report, out;
  double from = 370.0, to = 490.0, step = 5.0;
};

void run_sweep(const RunConfig& rc, const SweepArgs& a) {
  auto in = open_input(a.report);
  const auto report = spike::read_report_csv(in, a.report);
  const auto curve = spike::threshold_sweep(report, spike::threshold_range(a.from, a.to, a.step), rc.spike_threshold_ms);
  std::ostringstream csv;
  csv << "# spike sweep seed=" << report.seed << " spike_threshold_ms="
      << spike::detail::format_number(rc.spike_threshold_ms) << " pairs=" << report.pairs.size() << '\n';
  spike::write_sweep_csv(curve, csv);
  if (a.out.empty()) {
    std::cout << csv.str();
    return;
  }
  Outputs out;
  out.open(a.out) << csv.str();
  out.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Response-time spike prediction toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value settings file (flags take precedence)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  RunConfig rc;
  app.add_option("--seed", rc.seed, "master seed");
  app.add_option("--threads", rc.threads, "worker threads (0 = all cores)");
  app.add_option("--spike-threshold-ms,--spike_threshold_ms", rc.spike_threshold_ms, "spike threshold (ms)")
      ->check(CLI::PositiveNumber);
  app.add_option("--horizon-min,--horizon_min", rc.horizon_min, "prediction horizon (minutes)")
      ->check(CLI::PositiveNumber);
  app.add_option("--window-min,--window_min", rc.window_min, "backtest window (minutes)")->check(CLI::PositiveNumber);
  app.add_option("--L,--L_hours", rc.L_hours, "backtest training span (hours)")->check(CLI::PositiveNumber);
  app.add_option("--lags", rc.lags, "target lag offsets in minutes")->delimiter(',');
  app.add_option("--smote-k,--smote_k", rc.smote_k, "SMOTE neighbours");
  app.add_option("--smote-percent,--smote_percent", rc.smote_percent, "SMOTE oversampling percentage");
  app.add_option("--de-np,--de_np", rc.de_np, "DE population size");
  app.add_option("--de-f,--de_f", rc.de_f, "DE differential weight");
  app.add_option("--de-cr,--de_cr", rc.de_cr, "DE crossover probability");
  app.add_option("--de-gen,--de_gen", rc.de_gen, "DE generations");
  app.add_option("--learner", rc.learner, "cart, forest or logistic");
  app.add_option("--min-samples-split,--min_samples_split", rc.min_samples_split);
  app.add_option("--max-depth,--max_depth", rc.max_depth);
  app.add_option("--n-estimators,--n_estimators", rc.n_estimators);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "write synthetic telemetry, ground truth and topology");
  gen->add_option("--days", ga.days)->check(CLI::PositiveNumber);
  gen->add_option("--n-upstream,--n_upstream", ga.n_upstream)->check(CLI::PositiveNumber);
  gen->add_option("--spike-rate,--spike_rate", ga.spike_rate);
  gen->add_option("--buildup-fraction,--buildup_fraction", ga.buildup_fraction);
  gen->add_option("--out", ga.out, "telemetry CSV")->required();
  gen->add_option("--truth", ga.truth, "ground-truth CSV (default: spikes_truth.csv beside --out)");
  gen->add_option("--topology", ga.topology, "topology JSON (default: topology.json beside --out)");

  FeaturizeArgs fa;
  auto* feat = app.add_subcommand("featurize", "build the labelled dataset from telemetry");
  feat->add_option("--in", fa.in)->required()->check(CLI::ExistingFile);
  feat->add_option("--topology", fa.topology)->check(CLI::ExistingFile);
  feat->add_option("--out", fa.out)->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit a model on a dataset");
  train->add_option("--data", ta.data)->required()->check(CLI::ExistingFile);
  train->add_flag("--smote", ta.smote);
  train->add_flag("--tune", ta.tune);
  train->add_option("--model-out,--model_out", ta.model_out)->required();
  train->add_option("--tuning-report,--tuning_report", ta.tuning_report);

  ExplainArgs ea;
  auto* expl = app.add_subcommand("explain", "print a tree model as indented rules");
  expl->add_option("--model", ea.model)->required()->check(CLI::ExistingFile);
  expl->add_option("--out", ea.out);

  Stage1Args sa;
  auto* st1 = app.add_subcommand("stage1", "time-ordered 80/20 evaluation");
  st1->add_option("--data", sa.data)->required()->check(CLI::ExistingFile);
  st1->add_flag("--smote", sa.smote);
  st1->add_flag("--tune", sa.tune);
  st1->add_option("--out", sa.out);

  BacktestArgs ba;
  auto* bt = app.add_subcommand("backtest", "sliding-window retrain-and-predict backtest");
  bt->add_option("--in", ba.in)->required()->check(CLI::ExistingFile);
  bt->add_option("--topology", ba.topology)->check(CLI::ExistingFile);
  bt->add_option("--report", ba.report)->required();
  bt->add_option("--params-from,--params_from", ba.params_from, "reuse learner and hyperparameters of a model")
      ->check(CLI::ExistingFile);
  bt->add_flag("--smote", ba.smote);

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep", "recall/precision across alarm thresholds");
  sw->add_option("--report", wa.report)->required()->check(CLI::ExistingFile);
  sw->add_option("--from", wa.from);
  sw->add_option("--to", wa.to);
  sw->add_option("--step", wa.step);
  sw->add_option("--out", wa.out);

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "spike: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) run_generate(rc, ga);
    else if (*feat) run_featurize(rc, fa);
    else if (*train) run_train(rc, ta);
    else if (*expl) run_explain(rc, ea);
    else if (*st1) run_stage1(rc, sa);
    else if (*bt) run_backtest(rc, ba);
    else if (*sw) run_sweep(rc, wa);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "spike: error: " << msg << '\n';
    return 1;
  }
  return 0;
}
