// dgrl command-line entry point.
//
//   dgrl <verb> --config <path> [--seed <int>] [--out <dir>]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime fault.

#include "dgrl/config.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <set>

namespace {

using dgrl::harness::ExperimentKind;

struct VerbArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

const std::map<std::string, std::set<ExperimentKind>>& verb_kinds() {
  static const std::map<std::string, std::set<ExperimentKind>> m{
      {"pretrain", {ExperimentKind::pretrain}},
      {"train", {ExperimentKind::goal_dqn, ExperimentKind::hier_keychest}},
      {"eval", {ExperimentKind::ood_eval, ExperimentKind::goal_dqn}},
      {"theorem", {ExperimentKind::theorem_check}},
      {"demo-factors", {ExperimentKind::factor_demo}},
  };
  return m;
}

int dispatch(const std::string& verb, const VerbArgs& a) {
  auto config = dgrl::harness::load_config(a.config);
  dgrl::harness::RunOptions opts;
  opts.verb = verb;
  opts.seed = a.seed;
  if (!a.out.empty()) opts.out_dir = a.out;

  dgrl::harness::RunResult result;
  if (verb == "sweep") {
    result = dgrl::harness::run_sweep(config, opts);
  } else if (verb == "plot") {
    result = dgrl::harness::run_plot(config, opts);
  } else {
    const auto& allowed = verb_kinds().at(verb);
    if (!allowed.count(config.kind)) {
      throw dgrl::ConfigError("experiment.kind: '" + std::string(dgrl::harness::to_string(config.kind)) +
                              "' cannot be run with the '" + verb + "' verb");
    }
    if (verb == "eval" && config.env.test_goals < 1) {
      throw dgrl::ConfigError("env.test_goals: eval needs at least one held-out goal");
    }
    result = dgrl::harness::run_experiment(config, opts);
  }
  std::cout << "wrote " << result.outputs.size() << " files under " << result.dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete factorial goal representations: pretraining, goal-conditioned RL, bound checks"};
  app.require_subcommand(1);
  std::map<std::string, VerbArgs> args;
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"pretrain", "Pretrain the encoder, VQ bottleneck and decoder"},
      {"train", "Train goal-conditioned or hierarchical agents"},
      {"eval", "Train and evaluate on held-out goals"},
      {"sweep", "Run one sub-experiment per sweep value and aggregate"},
      {"theorem", "Monte Carlo check of the generalization bound"},
      {"demo-factors", "Factor-ablation demo on the synthetic shape/colour dataset"},
      {"plot", "Render learning curves from metrics CSVs"},
  };
  for (const auto& [verb, help] : verbs) {
    auto* sub = app.add_subcommand(verb, help);
    auto& a = args[verb];
    sub->add_option("--config", a.config, "YAML experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "Run only this seed");
    sub->add_option("--out", a.out, "Output directory (default: output.dir)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const auto* chosen = app.get_subcommands().front();
  const std::string verb = chosen->get_name();
  try {
    return dispatch(verb, args[verb]);
  } catch (const dgrl::ConfigError& e) {
    std::cerr << "dgrl " << verb << ": configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dgrl " << verb << ": runtime fault: " << e.what() << "\n";
    return 3;
  }
}
