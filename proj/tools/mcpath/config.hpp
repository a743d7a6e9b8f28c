#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcpath/data.hpp"
#include "mcpath/network.hpp"

namespace mcpath::cli {

// Bad config file, unknown key or out-of-range value (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  DataSpec data;
  std::vector<int> hidden{32, 32};
  Activation activation = Activation::ReLU;
  double slope = 0.01;
  LossKind loss = LossKind::CrossEntropy;
  TrainConfig train;
  TrainConfig subnet;
  double drop_ratio = 0.5;
  int trials_a = 20;
  int trials_b = 200;
  int samples_per_segment = 20;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out = "out";
  bool shortcut = false;
  std::vector<int> sweep_widths;
  double epsilon = 0.05;
  bool check_dropout = false;
  int check_attempts = 20;

  RunConfig();

  // Input and output widths come from the data spec.
  NetworkArch arch() const;
  NetworkArch arch_with_hidden(int width) const;
  void validate() const;
};

// Flat "key = value" INI: sections [data], [arch], [train], [subnet],
// [experiment], [check]. Unknown sections or keys are rejected.
RunConfig load_config(const std::string& path);
void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

std::vector<int> parse_int_list(const std::string& text);

}  // namespace mcpath::cli
