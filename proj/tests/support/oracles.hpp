#pragma once

// Reference implementations for tests. Everything here is written with plain
// loops over coefficients and shares no code with the library's forward,
// loss or backprop paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mcpath/network.hpp"
#include "mcpath/rng.hpp"

namespace mcpath::testing {

inline double ref_activate(const NetworkArch& arch, double z) {
  if (z > 0) return z;
  return arch.activation == Activation::ReLU ? 0.0 : arch.slope * z;
}

// f_L(theta, x) by explicit sums.
inline std::vector<double> ref_forward(const NetworkArch& arch, const Params& p, const std::vector<double>& x) {
  std::vector<double> h = x;
  const int L = arch.depth();
  for (int l = 1; l <= L; ++l) {
    const Matrix& W = p.W(l);
    std::vector<double> next(static_cast<std::size_t>(arch.width(l)), 0.0);
    for (int j = 0; j < arch.width(l); ++j) {
      double s = l < L ? p.b(l)(j) : 0.0;
      for (int i = 0; i < arch.width(l - 1); ++i) s += W(i, j) * h[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(j)] = l < L ? ref_activate(arch, s) : s;
    }
    h = std::move(next);
  }
  return h;
}

inline std::vector<double> row_of(const Matrix& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

// Mean loss by explicit sums; cross-entropy with log-sum-exp.
inline double ref_loss(const NetworkArch& arch, const Params& p, const Dataset& d) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto out = ref_forward(arch, p, row_of(d.inputs, i));
    if (arch.loss == LossKind::Squared) {
      for (std::size_t k = 0; k < out.size(); ++k) {
        const double e = out[k] - d.targets(i, static_cast<Eigen::Index>(k));
        total += 0.5 * e * e;
      }
    } else {
      const double mx = *std::max_element(out.begin(), out.end());
      double z = 0.0;
      for (double o : out) z += std::exp(o - mx);
      double ysum = 0.0;
      double dot = 0.0;
      for (std::size_t k = 0; k < out.size(); ++k) {
        ysum += d.targets(i, static_cast<Eigen::Index>(k));
        dot += d.targets(i, static_cast<Eigen::Index>(k)) * out[k];
      }
      total += ysum * (mx + std::log(z)) - dot;
    }
  }
  return total / static_cast<double>(d.size());
}

// Gaussian weights and biases with scale `scale`.
inline Params random_params(const NetworkArch& arch, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  Params p = Params::zeros(arch);
  for (auto& w : p.weights) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
  }
  for (auto& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = scale * rng.normal();
  }
  return p;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Random one-hot targets over `classes`, each class used at least once when possible.
inline Dataset random_dataset(int n, int dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.inputs = random_matrix(n, dim, seed ^ 0x5A5AULL);
  d.targets = Matrix::Zero(n, classes);
  for (int i = 0; i < n; ++i) {
    const int c = i < classes ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    d.targets(i, c) = 1.0;
  }
  return d;
}

// Makes neuron j of hidden layer l pure zero.
inline void zero_neuron(Params& p, int layer, int j) {
  p.W(layer).col(j).setZero();
  p.b(layer)(j) = 0.0;
  p.W(layer + 1).row(j).setZero();
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Determinant by the Leibniz permutation sum.
inline double leibniz_det(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double total = 0.0;
  do {
    int inversions = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) inversions += perm[static_cast<std::size_t>(i)] > perm[static_cast<std::size_t>(j)];
    }
    double term = inversions % 2 ? -1.0 : 1.0;
    for (int i = 0; i < n; ++i) term *= m(i, perm[static_cast<std::size_t>(i)]);
    total += term;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total;
}

// Exhaustive oracle over (d+1)-subsets with the same relative threshold.
inline bool oracle_generic(const Matrix& pts) {
  const int n = static_cast<int>(pts.rows());
  const int k = static_cast<int>(pts.cols()) + 1;
  std::vector<char> pick(static_cast<std::size_t>(n), 0);
  std::fill(pick.begin(), pick.begin() + k, 1);
  do {
    Matrix h(k, k);
    double norms = 1.0;
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (!pick[static_cast<std::size_t>(i)]) continue;
      h.row(r).head(k - 1) = pts.row(i);
      h(r, k - 1) = 1.0;
      norms *= h.row(r).norm();
      ++r;
    }
    if (std::abs(leibniz_det(h)) <= 1e-9 * norms) return false;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return true;
}

// Central differences of ref_loss, flattened in weights-then-biases order.
inline std::vector<double> finite_difference(const NetworkArch& arch, Params p, const Dataset& d, double h) {
  std::vector<double> out;
  auto probe = [&](double& coeff) {
    const double saved = coeff;
    coeff = saved + h;
    const double up = ref_loss(arch, p, d);
    coeff = saved - h;
    const double down = ref_loss(arch, p, d);
    coeff = saved;
    out.push_back((up - down) / (2 * h));
  };
  for (auto& w : p.weights) {
    for (Eigen::Index i = 0; i < w.size(); ++i) probe(w.data()[i]);
  }
  for (auto& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) probe(b.data()[i]);
  }
  return out;
}

inline std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  for (const auto& w : p.weights) out.insert(out.end(), w.data(), w.data() + w.size());
  for (const auto& b : p.biases) out.insert(out.end(), b.data(), b.data() + b.size());
  return out;
}

}  // namespace mcpath::testing
