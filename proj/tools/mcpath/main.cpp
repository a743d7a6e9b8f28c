// mcpath: train networks, estimate the connectivity bound, build the
// connecting path and check corollary assumptions.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "commands.hpp"
#include "config.hpp"
#include "mcpath/errors.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> p;
  std::optional<int> trials_a;
  std::optional<int> trials_b;
  std::optional<int> samples_per_segment;
  std::optional<int> jobs;
  bool shortcut = false;
  std::optional<std::string> widths;
  std::vector<std::string> models;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "Config file (INI)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--seed", o.seed, "Base seed");
  sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

mcpath::cli::RunConfig resolve(const Overrides& o) {
  auto cfg = mcpath::cli::load_config(o.config);
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.p) cfg.drop_ratio = *o.p;
  if (o.trials_a) cfg.trials_a = *o.trials_a;
  if (o.trials_b) cfg.trials_b = *o.trials_b;
  if (o.samples_per_segment) cfg.samples_per_segment = *o.samples_per_segment;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.shortcut) cfg.shortcut = true;
  if (o.widths) cfg.sweep_widths = mcpath::cli::parse_int_list(*o.widths);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mcpath::cli;
  CLI::App app{"Mode connectivity via sparse subnetworks"};
  app.require_subcommand(1);
  Overrides o;

  auto* train = app.add_subcommand("train", "Train a network (or a width sweep) on the configured data");
  add_common(train, o);
  train->add_option("--widths", o.widths, "Comma-separated hidden widths to sweep");

  auto* exp_a = app.add_subcommand("exp-a", "Experiment A: achieved subnet loss per layer");
  add_common(exp_a, o);
  exp_a->add_option("--p", o.p, "Dropout ratio p");
  exp_a->add_option("--trials-a", o.trials_a, "Subsets sampled per layer");
  exp_a->add_option("model", o.models, "Model file")->required()->expected(1)->check(CLI::ExistingFile);

  auto* exp_b = app.add_subcommand("exp-b", "Experiment B: rescaled dropout loss per layer");
  add_common(exp_b, o);
  exp_b->add_option("--p", o.p, "Dropout ratio p");
  exp_b->add_option("--trials-b", o.trials_b, "Dropout draws per layer");
  exp_b->add_option("model", o.models, "Model file")->required()->expected(1)->check(CLI::ExistingFile);

  auto* path = app.add_subcommand("path", "Build and evaluate the connecting path between two models");
  add_common(path, o);
  path->add_option("--p", o.p, "Dropout ratio p");
  path->add_option("--trials-a", o.trials_a, "Subsets sampled per layer");
  path->add_option("--samples-per-segment", o.samples_per_segment, "Loss samples per segment");
  path->add_flag("--shortcut", o.shortcut, "Emit the trivial path when both models are identical");
  path->add_option("models", o.models, "Two model files")->required()->expected(2)->check(CLI::ExistingFile);

  auto* check = app.add_subcommand("check", "Check corollary assumptions for a model");
  add_common(check, o);
  check->add_option("--p", o.p, "Dropout ratio p");
  check->add_option("--trials-b", o.trials_b, "Dropout draws per layer");
  check->add_option("model", o.models, "Model file")->required()->expected(1)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (*train) return cmd_train(cfg);
    if (*exp_a) return cmd_exp_a(cfg, o.models.at(0));
    if (*exp_b) return cmd_exp_b(cfg, o.models.at(0));
    if (*path) return cmd_path(cfg, o.models.at(0), o.models.at(1));
    if (*check) return cmd_check(cfg, o.models.at(0));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const mcpath::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const mcpath::NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const mcpath::PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kTrainingError;
  }
  return kOk;
}
