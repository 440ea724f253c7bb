#include <iostream>

#include <CLI11.hpp>

#include "delip/cli/commands.hpp"
#include "delip/cli/config.hpp"
#include "delip/numerics/errors.hpp"

namespace {

void add_common(CLI::App* cmd, delip::cli::CommonArgs& c) {
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_flag("--force", c.force, "overwrite existing outputs");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace delip::cli;
  CLI::App app{"delip: learned-model POMCP workbench for the door-navigation task"};
  app.require_subcommand(1);

  CollectArgs collect;
  auto* c = app.add_subcommand("collect", "record random-policy episodes to a dataset CSV");
  add_common(c, collect.common);
  c->add_option("--episodes", collect.episodes, "number of episodes");
  c->add_option("--len", collect.length, "steps per episode");
  c->add_option("--out", collect.out, "dataset CSV path")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "fit the state-space model");
  add_common(t, train.common);
  t->add_option("--mode", train.mode, "full | rewards-only | pretrain")
      ->check(CLI::IsMember({"full", "rewards-only", "pretrain"}));
  t->add_option("--data", train.data, "dataset CSV")->required();
  t->add_option("--pretrained", train.pretrained, "pretrained checkpoint (rewards-only)");
  t->add_option("--out", train.out, "output directory")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "run episodes in the true environment");
  add_common(e, eval.common);
  e->add_option("--planner", eval.planner, "delip | oracle | random")
      ->check(CLI::IsMember({"delip", "oracle", "random"}));
  e->add_option("--checkpoint", eval.checkpoint, "model checkpoint (delip)");
  e->add_option("--episodes", eval.episodes, "number of episodes");
  e->add_option("--len", eval.length, "steps per episode");
  e->add_option("--out", eval.out, "output directory")->required();

  ReportArgs report;
  bool no_regret = false;
  auto* r = app.add_subcommand("report-data", "aggregate metrics files into a tidy learning-curve table");
  r->add_option("inputs", report.inputs, "metrics.csv files")->required();
  r->add_option("--out", report.out, "output CSV")->required();
  r->add_flag("--no-regret", no_regret, "skip the regret column (no oracle rows needed)");
  r->add_flag("--force", report.force, "overwrite existing output");

  DumpArgs dump;
  auto* d = app.add_subcommand("dump-model", "one-step predictions on fresh episodes");
  add_common(d, dump.common);
  d->add_option("--checkpoint", dump.checkpoint, "model checkpoint")->required();
  d->add_option("--episodes", dump.episodes, "held-out episodes");
  d->add_option("--len", dump.length, "steps per episode");
  d->add_option("--out", dump.out, "output CSV")->required();

  app.add_subcommand("defaults", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c->parsed()) return run_collect(collect, std::cout);
    if (t->parsed()) return run_train(train, std::cout);
    if (e->parsed()) return run_eval(eval, std::cout);
    if (r->parsed()) {
      report.regret = !no_regret;
      return run_report(report, std::cout);
    }
    if (d->parsed()) return run_dump_model(dump, std::cout);
    std::cout << defaults_reference();
    return 0;
  } catch (const delip::UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const delip::ContractError& err) {
    std::cerr << "contract violation: " << err.what() << "\n";
    return 3;
  } catch (const delip::NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return 4;
  }
}
