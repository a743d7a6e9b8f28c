#pragma once

// Fully-connected networks: architecture, parameters, forward maps, losses,
// backpropagation and mini-batch SGD. Layers are indexed 0..L as in
// f_0 = x, f_l = act(W_l^T f_{l-1} + b_l) for hidden l, f_L = W_L^T f_{L-1}.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcpath/errors.hpp"

namespace mcpath {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU, LeakyReLU };
enum class LossKind { CrossEntropy, Squared };

std::string to_string(Activation a);
std::string to_string(LossKind k);
Activation parse_activation(const std::string& s);
LossKind parse_loss_kind(const std::string& s);

struct NetworkArch {
  std::vector<int> widths;  // n_0 .. n_L
  Activation activation = Activation::ReLU;
  double slope = 0.01;  // LeakyReLU negative-side slope, in (0, 1)
  LossKind loss = LossKind::CrossEntropy;

  int depth() const noexcept { return static_cast<int>(widths.size()) - 1; }
  int width(int layer) const { return widths.at(static_cast<std::size_t>(layer)); }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }

  // Throws std::invalid_argument unless L >= min_depth, widths >= 1 and the
  // slope is valid. Host networks need a hidden layer; subnets anchored at
  // L-1 are a single linear map and are validated with min_depth = 1.
  void validate(int min_depth = 2) const;

  // Same layout with different widths.
  NetworkArch with_widths(std::vector<int> w) const;

  bool operator==(const NetworkArch&) const = default;
};

// W_l has shape n_{l-1} x n_l (rows = input side); b_l exists for hidden
// layers 1..L-1 only.
struct Params {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Params zeros(const NetworkArch& arch);

  Matrix& W(int layer) { return weights.at(static_cast<std::size_t>(layer - 1)); }
  const Matrix& W(int layer) const { return weights.at(static_cast<std::size_t>(layer - 1)); }
  Vector& b(int layer) { return biases.at(static_cast<std::size_t>(layer - 1)); }
  const Vector& b(int layer) const { return biases.at(static_cast<std::size_t>(layer - 1)); }

  std::size_t parameter_count() const;

  // Throws ShapeError naming the first offending layer.
  void check_shapes(const NetworkArch& arch) const;
  bool all_finite() const;

  // this += alpha * other
  void axpy(double alpha, const Params& other);

  // Coordinate-wise (1 - t) a + t b. Exact at t = 0 and t = 1.
  static Params lerp(const Params& a, const Params& b, double t);

  // Bitwise comparison of every coefficient.
  bool identical(const Params& other) const;
};

struct Dataset {
  Matrix inputs;   // N x n_0
  Matrix targets;  // N x n_L

  Eigen::Index size() const noexcept { return inputs.rows(); }
  Dataset rows(const std::vector<int>& index) const;
  // Throws std::invalid_argument if a target row is not an exact one-hot.
  void require_one_hot() const;
  // Argmax of each target row.
  std::vector<int> labels() const;
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 100;
  int max_epochs = 100;
  double target_loss = 0.0;  // stop once the full-data loss is <= this
  std::uint64_t seed = 0;
  int min_epochs = 0;               // never stop before this many epochs
  bool stop_on_zero_error = false;  // also stop at zero classification error

  void validate() const;
};

struct TrainResult {
  Params params;                // final iterate
  std::vector<double> history;  // full-data loss; [0] is the initial loss
  Params best_params;           // lowest-loss checkpoint, including the start
  double best_loss = 0.0;
  int epochs_run = 0;
};

// Uniform(-a, a) with a = sqrt(6 / (n_{l-1} + n_l)), zero biases.
Params init_params(const NetworkArch& arch, std::uint64_t seed);

double activate(const NetworkArch& arch, double z) noexcept;

// f_l(theta, x) for a single input. Throws ShapeError on mismatch.
Vector forward_features(const NetworkArch& arch, const Params& params, const Vector& x, int layer);

// Row-wise forward pass to layer `layer`: returns N x n_l.
Matrix forward_batch(const NetworkArch& arch, const Params& params, const Matrix& inputs, int layer);

// Mean per-sample loss of outputs (N x n_L) against targets.
double loss_from_outputs(LossKind kind, const Matrix& outputs, const Matrix& targets);

// Fraction of rows whose argmax differs from the target argmax; ties pick
// the lowest index.
double error_from_outputs(const Matrix& outputs, const Matrix& targets);

// Phi(theta). Throws NonFiniteLossError on inf/NaN.
double average_loss(const NetworkArch& arch, const Params& params, const Dataset& data);

double classification_error(const NetworkArch& arch, const Params& params, const Dataset& data);

// Exact gradient of average_loss over `batch`; ReLU'(0) = 0.
Params gradient(const NetworkArch& arch, const Params& params, const Dataset& batch);

// Mini-batch SGD with heavy-ball momentum (v <- mu v + g, theta <- theta - lr v),
// one SplitMix64 shuffle per epoch. Throws DivergenceError.
TrainResult sgd_train(const NetworkArch& arch, const Params& init, const Dataset& data,
                      const TrainConfig& cfg);

}  // namespace mcpath
