#include "mcpath/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mcpath/rng.hpp"

namespace mcpath {

std::string to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "leaky_relu";
}

std::string to_string(LossKind k) {
  return k == LossKind::CrossEntropy ? "cross_entropy" : "squared";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "leaky_relu") return Activation::LeakyReLU;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "cross_entropy") return LossKind::CrossEntropy;
  if (s == "squared") return LossKind::Squared;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

void NetworkArch::validate(int min_depth) const {
  if (depth() < min_depth) {
    throw std::invalid_argument("network depth " + std::to_string(depth()) + " below minimum " +
                                std::to_string(min_depth));
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw std::invalid_argument("layer " + std::to_string(i) + " has width < 1");
  }
  if (activation == Activation::LeakyReLU && !(slope > 0.0 && slope < 1.0)) {
    throw std::invalid_argument("LeakyReLU slope must lie in (0, 1)");
  }
}

NetworkArch NetworkArch::with_widths(std::vector<int> w) const {
  NetworkArch out = *this;
  out.widths = std::move(w);
  return out;
}

Params Params::zeros(const NetworkArch& arch) {
  Params p;
  const int L = arch.depth();
  for (int l = 1; l <= L; ++l) {
    p.weights.push_back(Matrix::Zero(arch.width(l - 1), arch.width(l)));
    if (l < L) p.biases.push_back(Vector::Zero(arch.width(l)));
  }
  return p;
}

std::size_t Params::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

void Params::check_shapes(const NetworkArch& arch) const {
  const int L = arch.depth();
  if (static_cast<int>(weights.size()) != L) {
    throw ShapeError(static_cast<int>(weights.size()), "expected " + std::to_string(L) + " weight matrices");
  }
  if (static_cast<int>(biases.size()) != L - 1) {
    throw ShapeError(static_cast<int>(biases.size()), "expected " + std::to_string(L - 1) + " bias vectors");
  }
  for (int l = 1; l <= L; ++l) {
    const Matrix& w = W(l);
    if (w.rows() != arch.width(l - 1) || w.cols() != arch.width(l)) {
      throw ShapeError(l, "W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                              ", expected " + std::to_string(arch.width(l - 1)) + "x" +
                              std::to_string(arch.width(l)));
    }
    if (l < L && b(l).size() != arch.width(l)) {
      throw ShapeError(l, "b has " + std::to_string(b(l).size()) + " entries, expected " +
                              std::to_string(arch.width(l)));
    }
  }
}

bool Params::all_finite() const {
  return std::all_of(weights.begin(), weights.end(), [](const Matrix& m) { return m.allFinite(); }) &&
         std::all_of(biases.begin(), biases.end(), [](const Vector& v) { return v.allFinite(); });
}

void Params::axpy(double alpha, const Params& other) {
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += alpha * other.weights[i];
  for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += alpha * other.biases[i];
}

Params Params::lerp(const Params& a, const Params& b, double t) {
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  Params out = a;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    out.weights[i] = (1.0 - t) * a.weights[i] + t * b.weights[i];
  }
  for (std::size_t i = 0; i < a.biases.size(); ++i) {
    out.biases[i] = (1.0 - t) * a.biases[i] + t * b.biases[i];
  }
  return out;
}

namespace {

template <typename A, typename B>
bool bitwise_equal(const A& x, const B& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(x.data()[i]) != std::bit_cast<std::uint64_t>(y.data()[i])) {
      return false;
    }
  }
  return true;
}

}  // namespace

bool Params::identical(const Params& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!bitwise_equal(weights[i], other.weights[i])) return false;
  }
  for (std::size_t i = 0; i < biases.size(); ++i) {
    if (!bitwise_equal(biases[i], other.biases[i])) return false;
  }
  return true;
}

Dataset Dataset::rows(const std::vector<int>& index) const {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(index.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(index.size()), targets.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(index[i]);
    out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(index[i]);
  }
  return out;
}

void Dataset::require_one_hot() const {
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    int ones = 0;
    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
      const double v = targets(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw std::invalid_argument("target row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) throw std::invalid_argument("target row " + std::to_string(r) + " is not one-hot");
  }
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(static_cast<std::size_t>(targets.rows()));
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    Eigen::Index idx = 0;
    targets.row(r).maxCoeff(&idx);
    out[static_cast<std::size_t>(r)] = static_cast<int>(idx);
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be nonnegative");
  if (!(target_loss >= 0.0)) throw std::invalid_argument("target_loss must be nonnegative");
}

Params init_params(const NetworkArch& arch, std::uint64_t seed) {
  arch.validate(1);
  Rng rng(seed);
  Params p = Params::zeros(arch);
  for (int l = 1; l <= arch.depth(); ++l) {
    const double a = std::sqrt(6.0 / (arch.width(l - 1) + arch.width(l)));
    Matrix& w = p.W(l);
    // Column-major fill order is part of the reproducibility contract.
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  }
  return p;
}

double activate(const NetworkArch& arch, double z) noexcept {
  if (z > 0.0) return z;
  return arch.activation == Activation::ReLU ? 0.0 : arch.slope * z;
}

namespace {

void apply_activation(const NetworkArch& arch, Matrix& z) {
  if (arch.activation == Activation::ReLU) {
    z = z.cwiseMax(0.0);
  } else {
    const double s = arch.slope;
    z = z.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
  }
}

Matrix activation_derivative(const NetworkArch& arch, const Matrix& z) {
  const double neg = arch.activation == Activation::ReLU ? 0.0 : arch.slope;
  return z.unaryExpr([neg](double v) { return v > 0.0 ? 1.0 : neg; });
}

void check_layer_index(const NetworkArch& arch, int layer) {
  if (layer < 0 || layer > arch.depth()) {
    throw std::out_of_range("layer " + std::to_string(layer) + " outside [0, " +
                            std::to_string(arch.depth()) + "]");
  }
}

}  // namespace

Vector forward_features(const NetworkArch& arch, const Params& params, const Vector& x, int layer) {
  check_layer_index(arch, layer);
  params.check_shapes(arch);
  if (x.size() != arch.input_dim()) throw ShapeError(0, "input has wrong dimension");
  Vector f = x;
  const int L = arch.depth();
  for (int l = 1; l <= layer; ++l) {
    if (l < L) {
      Vector z = params.W(l).transpose() * f + params.b(l);
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = activate(arch, z[i]);
      f = std::move(z);
    } else {
      f = params.W(l).transpose() * f;
    }
  }
  return f;
}

Matrix forward_batch(const NetworkArch& arch, const Params& params, const Matrix& inputs, int layer) {
  check_layer_index(arch, layer);
  params.check_shapes(arch);
  if (inputs.cols() != arch.input_dim()) throw ShapeError(0, "inputs have wrong column count");
  Matrix f = inputs;
  const int L = arch.depth();
  for (int l = 1; l <= layer; ++l) {
    Matrix z = f * params.W(l);
    if (l < L) {
      z.rowwise() += params.b(l).transpose();
      apply_activation(arch, z);
    }
    f = std::move(z);
  }
  return f;
}

double loss_from_outputs(LossKind kind, const Matrix& outputs, const Matrix& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw ShapeError(-1, "outputs and targets disagree");
  }
  const Eigen::Index n = outputs.rows();
  if (n == 0) throw std::invalid_argument("loss over an empty dataset");
  double total = 0.0;
  if (kind == LossKind::CrossEntropy) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double m = outputs.row(r).maxCoeff();
      const double lse = m + std::log((outputs.row(r).array() - m).exp().sum());
      total += (targets.row(r).array() * (lse - outputs.row(r).array())).sum();
    }
  } else {
    total = 0.5 * (outputs - targets).squaredNorm();
  }
  const double mean = total / static_cast<double>(n);
  if (!std::isfinite(mean)) throw NonFiniteLossError("loss is not finite");
  return mean;
}

double error_from_outputs(const Matrix& outputs, const Matrix& targets) {
  const Eigen::Index n = outputs.rows();
  if (n == 0) return 0.0;
  Eigen::Index wrong = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index predicted = 0;
    Eigen::Index truth = 0;
    // Eigen's maxCoeff returns the first maximal index.
    outputs.row(r).maxCoeff(&predicted);
    targets.row(r).maxCoeff(&truth);
    if (predicted != truth) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

double average_loss(const NetworkArch& arch, const Params& params, const Dataset& data) {
  return loss_from_outputs(arch.loss, forward_batch(arch, params, data.inputs, arch.depth()), data.targets);
}

double classification_error(const NetworkArch& arch, const Params& params, const Dataset& data) {
  return error_from_outputs(forward_batch(arch, params, data.inputs, arch.depth()), data.targets);
}

Params gradient(const NetworkArch& arch, const Params& params, const Dataset& batch) {
  params.check_shapes(arch);
  const int L = arch.depth();
  const auto n = static_cast<double>(batch.size());
  if (batch.size() == 0) throw std::invalid_argument("gradient over an empty batch");

  std::vector<Matrix> pre(static_cast<std::size_t>(L));   // pre[l] = Z_l, l in [1, L-1]
  std::vector<Matrix> act(static_cast<std::size_t>(L));   // act[l] = f_l, l in [0, L-1]
  act[0] = batch.inputs;
  for (int l = 1; l < L; ++l) {
    Matrix z = act[static_cast<std::size_t>(l - 1)] * params.W(l);
    z.rowwise() += params.b(l).transpose();
    pre[static_cast<std::size_t>(l)] = z;
    apply_activation(arch, z);
    act[static_cast<std::size_t>(l)] = std::move(z);
  }
  const Matrix out = act[static_cast<std::size_t>(L - 1)] * params.W(L);

  Matrix delta;
  if (arch.loss == LossKind::CrossEntropy) {
    delta.resize(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double m = out.row(r).maxCoeff();
      Eigen::RowVectorXd e = (out.row(r).array() - m).exp().matrix();
      // d/dz of -sum_k y_k log softmax_k = softmax * sum(y) - y
      delta.row(r) = e / e.sum() * batch.targets.row(r).sum() - batch.targets.row(r);
    }
  } else {
    delta = out - batch.targets;
  }
  delta /= n;

  Params grad = Params::zeros(arch);
  grad.W(L) = act[static_cast<std::size_t>(L - 1)].transpose() * delta;
  Matrix upstream = delta * params.W(L).transpose();
  for (int l = L - 1; l >= 1; --l) {
    Matrix dz = upstream.cwiseProduct(activation_derivative(arch, pre[static_cast<std::size_t>(l)]));
    grad.W(l) = act[static_cast<std::size_t>(l - 1)].transpose() * dz;
    grad.b(l) = dz.colwise().sum().transpose();
    if (l > 1) upstream = dz * params.W(l).transpose();
  }
  return grad;
}

TrainResult sgd_train(const NetworkArch& arch, const Params& init, const Dataset& data,
                      const TrainConfig& cfg) {
  arch.validate(1);
  cfg.validate();
  init.check_shapes(arch);
  const auto n = static_cast<int>(data.size());
  if (n < 1) throw std::invalid_argument("sgd_train on an empty dataset");
  const int batch = std::min(cfg.batch_size, n);

  TrainResult result;
  result.params = init;
  auto evaluate = [&](int epoch) {
    double loss = std::numeric_limits<double>::quiet_NaN();
    try {
      loss = average_loss(arch, result.params, data);
    } catch (const NonFiniteLossError&) {
    }
    if (!std::isfinite(loss) || loss > 1e6) {
      const double last = result.history.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                 : result.history.back();
      throw DivergenceError(last, epoch);
    }
    return loss;
  };
  auto should_stop = [&](int epoch, double loss) {
    if (epoch < cfg.min_epochs) return false;
    if (loss <= cfg.target_loss) return true;
    return cfg.stop_on_zero_error && classification_error(arch, result.params, data) == 0.0;
  };

  double loss = evaluate(0);
  result.history.push_back(loss);
  result.best_params = result.params;
  result.best_loss = loss;
  if (cfg.max_epochs == 0 || should_stop(0, loss)) return result;

  Rng rng(cfg.seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Params velocity = Params::zeros(arch);
  Dataset mb;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch) {
      const int count = std::min(batch, n - start);
      mb.inputs.resize(count, data.inputs.cols());
      mb.targets.resize(count, data.targets.cols());
      for (int i = 0; i < count; ++i) {
        mb.inputs.row(i) = data.inputs.row(order[static_cast<std::size_t>(start + i)]);
        mb.targets.row(i) = data.targets.row(order[static_cast<std::size_t>(start + i)]);
      }
      const Params g = gradient(arch, result.params, mb);
      for (std::size_t k = 0; k < velocity.weights.size(); ++k) {
        velocity.weights[k] = cfg.momentum * velocity.weights[k] + g.weights[k];
      }
      for (std::size_t k = 0; k < velocity.biases.size(); ++k) {
        velocity.biases[k] = cfg.momentum * velocity.biases[k] + g.biases[k];
      }
      result.params.axpy(-cfg.learning_rate, velocity);
    }
    loss = evaluate(epoch);
    result.history.push_back(loss);
    result.epochs_run = epoch;
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.best_params = result.params;
    }
    if (should_stop(epoch, loss)) break;
  }
  return result;
}

}  // namespace mcpath
