#include "commands.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mcpath/conditions.hpp"
#include "mcpath/io.hpp"
#include "mcpath/pathbuild.hpp"
#include "mcpath/subnet.hpp"

namespace mcpath::cli {

namespace {

std::string out_file(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out) / name).string();
}

Dataset load_data(const RunConfig& cfg) { return generate(cfg.data); }

ModelFile load_checked(const std::string& path, const Dataset& data) {
  ModelFile model = load_model(path);
  if (model.arch.input_dim() != data.inputs.cols() || model.arch.output_dim() != data.targets.cols()) {
    throw ConfigError("model " + path + " does not match the configured data dimensions");
  }
  return model;
}

TrainConfig subnet_config(const RunConfig& cfg) {
  TrainConfig t = cfg.subnet;
  t.seed = cfg.seed;
  return t;
}

void print_table(const ConditionReport& report) {
  std::cout << report.condition << ": " << to_string(report.overall()) << '\n';
  for (const auto& a : report.assumptions) {
    std::cout << "  " << std::left << std::setw(18) << a.name << std::setw(14) << to_string(a.verdict) << a.detail
              << '\n';
  }
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
  const Dataset data = load_data(cfg);
  std::vector<int> widths = cfg.sweep_widths;
  const bool sweep = !widths.empty();
  if (!sweep) widths.push_back(0);

  std::string csv = training_csv_header();
  bool all_zero_error = true;
  for (int w : widths) {
    const NetworkArch arch = sweep ? cfg.arch_with_hidden(w) : cfg.arch();
    TrainConfig t = cfg.train;
    t.seed = Rng::derive(cfg.seed, 1);
    const TrainResult r = sgd_train(arch, init_params(arch, cfg.seed), data, t);
    const double err = classification_error(arch, r.params, data);
    all_zero_error = all_zero_error && err == 0.0;
    const std::string name = sweep ? "model_w" + std::to_string(w) + ".mcnet" : "model.mcnet";
    save_model(out_file(cfg, name), {arch, r.params, cfg.seed});
    csv += training_csv_rows(sweep ? w : arch.width(1), cfg.seed, r.history);
    std::cout << name << ": loss " << r.history.back() << ", error " << err << ", epochs " << r.epochs_run << '\n';
  }
  write_atomic(out_file(cfg, "train.csv"), csv);
  return all_zero_error ? kOk : kTrainingError;
}

int cmd_exp_a(const RunConfig& cfg, const std::string& model_path) {
  const Dataset data = load_data(cfg);
  const ModelFile model = load_checked(model_path, data);
  const EndpointBound bound =
      experiment_a(model.arch, model.params, data, cfg.drop_ratio, cfg.trials_a, subnet_config(cfg), cfg.jobs);
  write_atomic(out_file(cfg, "exp_a.csv"), trials_csv(&bound, nullptr, bound.reference_loss, bound.reference_error));
  BoundReport report{cfg.drop_ratio, cfg.trials_a, {bound}};
  write_atomic(out_file(cfg, "bound.json"), bound_to_json(model.arch, report).dump(2));
  for (const auto& q : bound.layers) {
    for (const auto& t : q.trials) {
      if (!t.loss) std::cerr << "layer " << t.layer << " trial " << t.trial << " failed: " << t.failure << '\n';
    }
    std::cout << "l=" << q.layer << " achieved Q " << q.best_loss << '\n';
  }
  std::cout << "Phi " << bound.reference_loss << ", bound " << bound.bound() << '\n';
  return kOk;
}

int cmd_exp_b(const RunConfig& cfg, const std::string& model_path) {
  const Dataset data = load_data(cfg);
  const ModelFile model = load_checked(model_path, data);
  const double phi = average_loss(model.arch, model.params, data);
  const double err = classification_error(model.arch, model.params, data);
  const auto curve =
      dropout_stability_curve(model.arch, model.params, data, cfg.trials_b, cfg.drop_ratio, cfg.seed, cfg.jobs);
  write_atomic(out_file(cfg, "exp_b.csv"), trials_csv(nullptr, &curve, phi, err));
  for (const auto& layer : curve) {
    std::cout << "l=" << layer.layer << " dropout loss " << layer.best_loss << " (r = " << layer.best_scale << ")\n";
  }
  std::cout << "Phi " << phi << '\n';
  return kOk;
}

int cmd_path(const RunConfig& cfg, const std::string& model_a, const std::string& model_b) {
  const Dataset data = load_data(cfg);
  const ModelFile a = load_checked(model_a, data);
  const ModelFile b = load_checked(model_b, data);
  if (!(a.arch == b.arch)) throw ConfigError("the two models have different architectures");

  ConnectConfig cc;
  cc.drop_ratio = cfg.drop_ratio;
  cc.trials_a = cfg.trials_a;
  cc.subnet = subnet_config(cfg);
  cc.samples_per_segment = cfg.samples_per_segment;
  cc.jobs = cfg.jobs;
  cc.shortcut = cfg.shortcut;
  const ConnectResult r = build_connecting_path(a.arch, a.params, b.params, data, cc);

  save_path(out_file(cfg, "path.mcpath"), r.path);
  write_atomic(out_file(cfg, "path.csv"), path_csv(r.path, r.report));
  write_atomic(out_file(cfg, "bound.json"), bound_to_json(a.arch, r.bound).dump(2));
  write_atomic(out_file(cfg, "path_report.json"), path_report_to_json(r.path, r.report).dump(2));
  std::cout << r.path.segment_count() << " segments, max loss " << r.report.max_loss;
  if (!r.bound.endpoints.empty()) std::cout << ", achieved RHS " << r.bound.rhs();
  std::cout << '\n';
  return kOk;
}

int cmd_check(const RunConfig& cfg, const std::string& model_path) {
  const Dataset data = load_data(cfg);
  const ModelFile model = load_checked(model_path, data);
  const auto& arch = model.arch;
  std::vector<ConditionReport> reports;

  if (arch.depth() >= 3) {
    const auto plan = search_corollary3_plan(arch, model.params, data, cfg.check_attempts, cfg.seed);
    reports.push_back(check_corollary3(arch, model.params, data, plan, cfg.epsilon, cfg.seed));
  } else {
    ConditionReport r;
    r.condition = "corollary3";
    r.assumptions.push_back({"depth", Verdict::Fail, "needs L >= 3", arch.depth() - 3.0});
    reports.push_back(r);
  }
  const auto plan4 = search_corollary4_plan(arch, model.params, data, cfg.check_attempts, cfg.seed);
  reports.push_back(check_corollary4(arch, model.params, data, plan4));
  if (cfg.check_dropout) {
    reports.push_back(check_dropout_stable(arch, model.params, data, cfg.epsilon, cfg.trials_b, cfg.drop_ratio,
                                           cfg.seed, cfg.jobs));
  }

  // Any one corollary suffices for connectivity.
  Verdict overall = Verdict::Fail;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& r : reports) {
    print_table(r);
    items.push_back(condition_to_json(r));
    if (r.overall() == Verdict::Pass) overall = Verdict::Pass;
    else if (r.overall() == Verdict::Inconclusive && overall == Verdict::Fail) overall = Verdict::Inconclusive;
  }
  const nlohmann::json doc = {{"epsilon", cfg.epsilon}, {"overall", to_string(overall)}, {"reports", items}};
  write_atomic(out_file(cfg, "conditions.json"), doc.dump(2));
  std::cout << "overall: " << to_string(overall) << '\n';
  return kOk;
}

}  // namespace mcpath::cli
