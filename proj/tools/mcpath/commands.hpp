#pragma once

#include <string>

#include "config.hpp"

namespace mcpath::cli {

enum ExitCode : int {
  kOk = 0,
  kTrainingError = 1,  // also any unexpected failure
  kConfig = 2,
  kDivergence = 3,
  kPrecondition = 4,
};

int cmd_train(const RunConfig& cfg);
int cmd_exp_a(const RunConfig& cfg, const std::string& model);
int cmd_exp_b(const RunConfig& cfg, const std::string& model);
int cmd_path(const RunConfig& cfg, const std::string& model_a, const std::string& model_b);
int cmd_check(const RunConfig& cfg, const std::string& model);

}  // namespace mcpath::cli
