// Command-line front end for the adversarial stress-testing toolkit.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "avstress/harness.hpp"

namespace {

int run(int argc, char** argv) {
  using namespace avstress;
  CLI::App app{"Multi-agent adversarial stress testing of driving policies"};
  app.require_subcommand(1);

  std::string config, trace, out_dir, attacker, baseline, defender;
  bool allow_mismatch = false, stochastic = false;

  CLI::App* train = app.add_subcommand("train", "Train attackers against a frozen defender");
  train->add_option("config", config, "Experiment config (JSON)")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate attack success rate");
  eval->add_option("config", config, "Experiment config (JSON)")->required();
  auto* attacker_opt = eval->add_option("--attacker", attacker, "Attacker actor checkpoint");
  eval->add_option("--baseline", baseline, "Baseline attackers instead of a checkpoint")
      ->check(CLI::IsMember({"random", "npc"}))
      ->excludes(attacker_opt);
  eval->add_option("--defender", defender, "Override defender type (vi, rvi, d3qn, ppo)");
  eval->add_flag("--allow-mismatch", allow_mismatch, "Accept artifacts with another config hash");
  eval->add_flag("--stochastic", stochastic, "Sample attacker actions instead of argmax");

  CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate 1, 2 and 3 attackers");
  ablate->add_option("config", config, "Experiment config (JSON)")->required();

  CLI::App* replay = app.add_subcommand("replay", "Re-simulate a trace and check its integrity");
  replay->add_option("trace", trace, "Trace file (JSON)")->required();

  CLI::App* render = app.add_subcommand("render", "Write one SVG frame per trace step");
  render->add_option("trace", trace, "Trace file (JSON)")->required();
  render->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* dtrain = app.add_subcommand("defender-train", "Train a learned defender (d3qn, ppo)");
  dtrain->add_option("config", config, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  CommandContext ctx;
  ctx.output_root = output_root_from_env();
  ctx.out = &std::cout;
  ctx.err = &std::cerr;
  try {
    if (*train) {
      cmd_train(config, ctx);
    } else if (*eval) {
      EvalOptions o;
      if (!attacker.empty()) o.attacker = attacker;
      if (!baseline.empty()) o.baseline = baseline;
      if (!defender.empty()) o.defender = defender;
      o.allow_mismatch = allow_mismatch;
      o.stochastic = stochastic;
      cmd_eval(config, o, ctx);
    } else if (*ablate) {
      cmd_ablate(config, ctx);
    } else if (*replay) {
      cmd_replay(trace, ctx);
    } else if (*render) {
      cmd_render(trace, out_dir, ctx);
    } else if (*dtrain) {
      cmd_defender_train(config, ctx);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
