// Three days of synthetic telemetry through both evaluation stages.
#include <iostream>

#include "spike/spike.hpp"

int main(int argc, char** argv) {
  spike::GenConfig gen;
  gen.days = 3;
  gen.seed = argc > 1 ? std::stoull(argv[1]) : 7;
  const auto g = spike::generate(gen);
  std::cout << g.truth.spikes.size() << " spikes injected over " << g.store.minutes() << " minutes\n";

  const auto ds = spike::build_examples(g.store, g.topology);
  spike::Stage1Options opt;
  opt.smote = spike::SmoteConfig{};
  const auto s1 = spike::stage1(ds, {}, opt);
  std::cout << "stage1 tp=" << s1.cm.tp << " fp=" << s1.cm.fp << " fn=" << s1.cm.fn << " tn=" << s1.cm.tn
            << "  recall " << spike::percent_or_dash(s1.cm.recall()) << "%  precision "
            << spike::percent_or_dash(s1.cm.precision()) << "%\n";

  // top of the tree only
  const auto rules = spike::export_tree(std::get<spike::RegressionTree>(s1.model));
  std::cout << rules.substr(0, rules.find('\n', rules.find('\n', rules.find('\n') + 1) + 1) + 1) << "...\n";

  const auto report = spike::stage2_backtest(spike::windowize(g.store), g.topology, {},
                                             spike::make_factory(s1.spec, opt.smote));
  for (const auto& p : spike::threshold_sweep(report, {400, 440, 470}).points)
    std::cout << "alarm > " << p.alarm_threshold_ms << " ms: recall " << spike::percent_or_dash(p.recall)
              << "%  precision " << spike::percent_or_dash(p.precision) << "%  (" << p.alarms << " alarms)\n";
}
