#include "config.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include "mcpath/parallel.hpp"

namespace mcpath::cli {

namespace {

template <typename T>
T to(const std::string& key, const std::string& value) {
  try {
    return boost::lexical_cast<T>(boost::algorithm::trim_copy(value));
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError("cannot parse '" + value + "' for key " + key);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  const auto v = boost::algorithm::trim_copy(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true/false for key " + key + ", got '" + value + "'");
}

void apply_train(TrainConfig& t, const std::string& key, const std::string& full, const std::string& value) {
  if (key == "lr") t.learning_rate = to<double>(full, value);
  else if (key == "momentum") t.momentum = to<double>(full, value);
  else if (key == "batch") t.batch_size = to<int>(full, value);
  else if (key == "epochs") t.max_epochs = to<int>(full, value);
  else if (key == "min_epochs") t.min_epochs = to<int>(full, value);
  else if (key == "target_loss") t.target_loss = to<double>(full, value);
  else if (key == "stop_on_zero_error") t.stop_on_zero_error = to_bool(full, value);
  else throw ConfigError("unknown key " + full);
}

}  // namespace

RunConfig::RunConfig() {
  train.max_epochs = 300;
  train.stop_on_zero_error = true;
  subnet.max_epochs = 200;
  jobs = default_jobs();
}

NetworkArch RunConfig::arch() const {
  NetworkArch a;
  a.widths.push_back(data.input_dim);
  a.widths.insert(a.widths.end(), hidden.begin(), hidden.end());
  a.widths.push_back(data.classes);
  a.activation = activation;
  a.slope = slope;
  a.loss = loss;
  return a;
}

NetworkArch RunConfig::arch_with_hidden(int width) const {
  NetworkArch a = arch();
  for (std::size_t i = 1; i + 1 < a.widths.size(); ++i) a.widths[i] = width;
  return a;
}

void RunConfig::validate() const {
  try {
    data.validate();
    arch().validate();
    train.validate();
    subnet.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(drop_ratio > 0.0 && drop_ratio <= 0.5)) throw ConfigError("p must lie in (0, 1/2]");
  if (trials_a < 1 || trials_b < 1) throw ConfigError("trial counts must be >= 1");
  if (samples_per_segment < 1) throw ConfigError("samples_per_segment must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (check_attempts < 1) throw ConfigError("check attempts must be >= 1");
  for (int w : sweep_widths) {
    if (w < 1) throw ConfigError("sweep widths must be >= 1");
  }
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (boost::algorithm::trim_copy(item).empty()) continue;
    out.push_back(to<int>("list", item));
  }
  if (out.empty()) throw ConfigError("empty integer list '" + text + "'");
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;
  try {
    if (section == "data") {
      if (key == "kind") cfg.data.kind = parse_data_kind(boost::algorithm::trim_copy(value));
      else if (key == "samples") cfg.data.samples = to<int>(full, value);
      else if (key == "input_dim") cfg.data.input_dim = to<int>(full, value);
      else if (key == "classes") cfg.data.classes = to<int>(full, value);
      else if (key == "noise") cfg.data.noise = to<double>(full, value);
      else if (key == "seed") cfg.data.seed = to<std::uint64_t>(full, value);
      else if (key == "images") cfg.data.images_path = boost::algorithm::trim_copy(value);
      else if (key == "labels") cfg.data.labels_path = boost::algorithm::trim_copy(value);
      else throw ConfigError("unknown key " + full);
    } else if (section == "arch") {
      if (key == "hidden") cfg.hidden = parse_int_list(value);
      else if (key == "activation") cfg.activation = parse_activation(boost::algorithm::trim_copy(value));
      else if (key == "slope") cfg.slope = to<double>(full, value);
      else if (key == "loss") cfg.loss = parse_loss_kind(boost::algorithm::trim_copy(value));
      else throw ConfigError("unknown key " + full);
    } else if (section == "train") {
      apply_train(cfg.train, key, full, value);
    } else if (section == "subnet") {
      apply_train(cfg.subnet, key, full, value);
    } else if (section == "experiment") {
      if (key == "p") cfg.drop_ratio = to<double>(full, value);
      else if (key == "trials_a") cfg.trials_a = to<int>(full, value);
      else if (key == "trials_b") cfg.trials_b = to<int>(full, value);
      else if (key == "samples_per_segment") cfg.samples_per_segment = to<int>(full, value);
      else if (key == "seed") cfg.seed = to<std::uint64_t>(full, value);
      else if (key == "jobs") cfg.jobs = to<int>(full, value);
      else if (key == "out") cfg.out = boost::algorithm::trim_copy(value);
      else if (key == "shortcut") cfg.shortcut = to_bool(full, value);
      else if (key == "widths") cfg.sweep_widths = parse_int_list(value);
      else throw ConfigError("unknown key " + full);
    } else if (section == "check") {
      if (key == "epsilon") cfg.epsilon = to<double>(full, value);
      else if (key == "dropout") cfg.check_dropout = to_bool(full, value);
      else if (key == "attempts") cfg.check_attempts = to<int>(full, value);
      else throw ConfigError("unknown key " + full);
    } else {
      throw ConfigError("unknown section [" + section + "]");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(full + ": " + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must sit inside a section");
    for (const auto& [key, value] : body) {
      if (!value.empty()) throw ConfigError("nested key under " + section + "." + key);
      apply_setting(cfg, section, key, value.data());
    }
  }
  if (cfg.data.kind == DataKind::MnistSubset) {
    // MNIST fixes the shapes; IDX paths are relative to the config file.
    const auto data = tree.get_child_optional("data");
    if (!data || !data->get_child_optional("input_dim")) cfg.data.input_dim = 784;
    if (!data || !data->get_child_optional("classes")) cfg.data.classes = 10;
    const auto base = std::filesystem::path(path).parent_path();
    for (std::string* p : {&cfg.data.images_path, &cfg.data.labels_path}) {
      if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    }
  }
  return cfg;
}

}  // namespace mcpath::cli
