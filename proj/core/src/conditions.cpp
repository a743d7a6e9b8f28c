#include "mcpath/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "mcpath/rng.hpp"

namespace mcpath {

namespace {

constexpr double kGenericRelTol = 1e-9;

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

// C(n, k), saturating at `cap` + 1.
long binomial_capped(long n, long k, long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long double c = 1;
  for (long i = 1; i <= k; ++i) {
    c = c * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (c > static_cast<long double>(cap)) return cap + 1;
  }
  return static_cast<long>(std::llround(c));
}

// |det| of the homogenized rows over the product of their norms.
double degeneracy_ratio(const Matrix& points, const std::vector<int>& rows) {
  const auto d = points.cols();
  Matrix m(d + 1, d + 1);
  double norms = 1.0;
  for (Eigen::Index r = 0; r <= d; ++r) {
    m.row(r).head(d) = points.row(rows[static_cast<std::size_t>(r)]);
    m(r, d) = 1.0;
    norms *= m.row(r).norm();
  }
  return std::abs(m.partialPivLu().determinant()) / norms;
}

Matrix select_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

double softmax_loss_and_grad(LossKind kind, const Matrix& logits, const Matrix& targets, Matrix* dlogits) {
  const double n = static_cast<double>(logits.rows());
  if (kind == LossKind::Squared) {
    const Matrix diff = logits - targets;
    if (dlogits) *dlogits = diff / n;
    return 0.5 * diff.squaredNorm() / n;
  }
  double total = 0.0;
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    const double ysum = targets.row(i).sum();
    total += ysum * (mx + std::log(z)) - targets.row(i).dot(logits.row(i));
    if (dlogits) dlogits->row(i) = (e / z * ysum - targets.row(i)) / n;
  }
  return total / n;
}

AssumptionVerdict from_bool(std::string name, bool ok, std::string detail, double margin) {
  return {std::move(name), ok ? Verdict::Pass : Verdict::Fail, std::move(detail), margin};
}

std::vector<int> all_indices(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Candidate subsets of size k from [n]: leading set first, then random draws.
std::vector<int> candidate_subset(int n, int k, int attempt, Rng& rng) {
  if (attempt == 0) {
    std::vector<int> v(static_cast<std::size_t>(k));
    std::iota(v.begin(), v.end(), 0);
    return v;
  }
  return rng.sample_without_replacement(n, k);
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

Verdict ConditionReport::overall() const {
  bool inconclusive = false;
  for (const auto& a : assumptions) {
    if (a.verdict == Verdict::Fail) return Verdict::Fail;
    inconclusive = inconclusive || a.verdict == Verdict::Inconclusive;
  }
  return inconclusive ? Verdict::Inconclusive : Verdict::Pass;
}

std::string GenericPositionResult::describe() const {
  if (verdict == Verdict::Fail) return "degenerate subset " + join(violation);
  if (exhaustive) return "proven over all " + std::to_string(subsets_checked) + " subsets";
  return "no violation found in " + std::to_string(subsets_checked) + " random subsets";
}

GenericPositionResult check_generic_position(const Matrix& points, long exact_limit, long samples,
                                             std::uint64_t seed) {
  const long n = points.rows();
  const long d = points.cols();
  if (n < 1 || d < 1) throw std::invalid_argument("generic position needs N >= 1 and d >= 1");
  GenericPositionResult out;
  out.min_ratio = std::numeric_limits<double>::infinity();
  const long k = d + 1;
  if (n < k) return out;  // at most d points: any hyperplane through them is fine

  auto visit = [&](const std::vector<int>& rows) {
    ++out.subsets_checked;
    const double r = degeneracy_ratio(points, rows);
    out.min_ratio = std::min(out.min_ratio, r);
    if (!(r > kGenericRelTol)) {
      out.verdict = Verdict::Fail;
      out.violation = rows;
      return false;
    }
    return true;
  };

  if (binomial_capped(n, k, exact_limit) <= exact_limit) {
    out.exhaustive = true;
    std::vector<int> rows = all_indices(static_cast<int>(k));
    while (true) {
      if (!visit(rows)) return out;
      long i = k - 1;
      while (i >= 0 && rows[static_cast<std::size_t>(i)] == n - k + i) --i;
      if (i < 0) break;
      ++rows[static_cast<std::size_t>(i)];
      for (long j = i + 1; j < k; ++j) rows[static_cast<std::size_t>(j)] = rows[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
  }

  out.exhaustive = false;
  Rng rng(seed);
  for (long s = 0; s < samples; ++s) {
    if (!visit(rng.sample_without_replacement(static_cast<int>(n), static_cast<int>(k)))) return out;
  }
  return out;
}

DistinctResult check_distinct(const Matrix& points, double tol) {
  if (tol < 0) throw std::invalid_argument("tolerance must be >= 0");
  DistinctResult out;
  out.distance = std::numeric_limits<double>::infinity();
  const auto n = points.rows();
  if (n < 2) return out;

  // Sweep in order of the first coordinate: L-infinity distance is at least
  // the first-coordinate gap, so the inner loop stops once that exceeds the best.
  std::vector<int> order = all_indices(static_cast<int>(n));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return points(a, 0) < points(b, 0) || (points(a, 0) == points(b, 0) && a < b);
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int a = order[i];
      const int b = order[j];
      if (points(b, 0) - points(a, 0) > out.distance) break;
      const double dist = (points.row(a) - points.row(b)).cwiseAbs().maxCoeff();
      if (dist < out.distance) {
        out.distance = dist;
        out.first = std::min(a, b);
        out.second = std::max(a, b);
      }
    }
  }
  out.verdict = out.distance > tol ? Verdict::Pass : Verdict::Fail;
  return out;
}

A1Result check_A1(std::int64_t n_lm2, std::int64_t n_lm1, std::int64_t n_out, std::int64_t keep_size,
                  std::int64_t samples) {
  if (n_lm2 < 1 || n_lm1 < 1 || n_out < 1 || keep_size < 0 || keep_size > n_lm1) {
    throw std::invalid_argument("check_A1: widths must be positive and keep_size within [0, n_{L-1}]");
  }
  A1Result out;
  out.samples = samples;
  out.half_clause = 2 * keep_size >= n_lm1;
  out.product = 4 * (n_lm2 / 8) * ((n_lm1 - keep_size) / (4 * n_out));
  out.verdict = out.half_clause && out.product >= samples ? Verdict::Pass : Verdict::Fail;
  return out;
}

A1Result check_A1(const NetworkArch& arch, int keep_size, std::int64_t samples) {
  const int L = arch.depth();
  if (L < 3) throw std::invalid_argument("check_A1 needs at least two hidden layers");
  return check_A1(arch.width(L - 2), arch.width(L - 1), arch.output_dim(), keep_size, samples);
}

RefitResult refit_last_layer(LossKind loss, const Matrix& features, const Matrix& targets, const Matrix* init,
                             int max_iterations, double grad_tol) {
  if (features.rows() != targets.rows()) throw std::invalid_argument("refit: feature and target rows differ");
  const auto k = features.cols();
  const auto c = targets.cols();
  RefitResult out;
  Matrix w = init ? *init : Matrix::Zero(k, c);
  if (w.rows() != k || w.cols() != c) throw std::invalid_argument("refit: initial weights have the wrong shape");

  Matrix grad;
  auto evaluate = [&](const Matrix& weights, Matrix* g) {
    Matrix dlogits;
    const double value = softmax_loss_and_grad(loss, features * weights, targets, g ? &dlogits : nullptr);
    if (g) *g = features.transpose() * dlogits;
    return value;
  };

  out.weights = w;
  out.loss = evaluate(w, &grad);
  out.grad_norm = grad.norm();
  if (k == 0 || out.grad_norm <= grad_tol) {
    out.converged = true;
    return out;
  }

  // Hessian in the logits is <= I (squared) or <= I / 2 (softmax).
  const double curvature = loss == LossKind::Squared ? 1.0 : 0.5;
  const Matrix gram = features.transpose() * features / static_cast<double>(features.rows());
  const double top = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = 1.0 / std::max(curvature * top, 1e-12);

  Matrix y = w;
  double momentum_t = 1.0;
  double current = out.loss;
  for (int it = 1; it <= max_iterations; ++it) {
    Matrix gy;
    evaluate(y, &gy);
    Matrix next = y - step * gy;
    Matrix g;
    const double value = evaluate(next, &g);
    out.iterations = it;
    if (value > current) {
      // Adaptive restart: drop momentum and take a plain step from w.
      momentum_t = 1.0;
      y = w;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
    y = next + ((momentum_t - 1.0) / t_next) * (next - w);
    momentum_t = t_next;
    w = std::move(next);
    current = value;
    if (value <= out.loss) {
      out.loss = value;
      out.weights = w;
      out.grad_norm = g.norm();
    }
    if (g.norm() <= grad_tol) {
      out.converged = true;
      out.grad_norm = g.norm();
      break;
    }
  }
  return out;
}

A1bResult check_A1b(const NetworkArch& arch, const Params& params, const Dataset& data,
                    const std::vector<int>& kept, double epsilon, int max_iterations) {
  const int L = arch.depth();
  for (int j : kept) {
    if (j < 0 || j >= arch.width(L - 1)) throw std::out_of_range("kept index outside layer L-1");
  }
  A1bResult out;
  out.reference_loss = average_loss(arch, params, data);
  const Matrix f = select_columns(forward_batch(arch, params, data.inputs, L - 1), kept);
  Matrix init(static_cast<Eigen::Index>(kept.size()), arch.output_dim());
  for (std::size_t r = 0; r < kept.size(); ++r) init.row(static_cast<Eigen::Index>(r)) = params.W(L).row(kept[r]);
  out.refit = refit_last_layer(arch.loss, f, data.targets, &init, max_iterations);
  out.refit_loss = out.refit.loss;
  if (out.refit_loss <= out.reference_loss + epsilon) {
    out.verdict = Verdict::Pass;
  } else {
    out.verdict = out.refit.converged ? Verdict::Fail : Verdict::Inconclusive;
  }
  return out;
}

SeparabilityResult check_linear_separability(const Matrix& features, const Matrix& labels, long max_epochs) {
  const auto n = features.rows();
  const auto d = features.cols();
  const auto c = labels.cols();
  if (c < 2) throw std::invalid_argument("separability needs at least two classes");
  if (labels.rows() != n) throw std::invalid_argument("features and labels disagree on N");
  if (max_epochs <= 0) max_epochs = 10 * static_cast<long>(n) * static_cast<long>(c);

  SeparabilityResult out;
  out.witness = Matrix::Zero(d + 1, c);
  out.class_errors.assign(static_cast<std::size_t>(c), 0);
  bool all = true;
  for (Eigen::Index k = 0; k < c; ++k) {
    Vector w = Vector::Zero(d);
    double b = 0.0;
    long epoch = 0;
    int mistakes = 0;
    for (; epoch < max_epochs; ++epoch) {
      mistakes = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double y = labels(i, k) > 0.5 ? 1.0 : -1.0;
        if (y * (features.row(i).dot(w) + b) <= 0.0) {
          w += y * features.row(i).transpose();
          b += y;
          ++mistakes;
        }
      }
      if (mistakes == 0) break;
    }
    out.epochs = std::max(out.epochs, epoch + (mistakes == 0 ? 1 : 0));
    out.witness.col(k).head(d) = w;
    out.witness(d, k) = b;
    out.class_errors[static_cast<std::size_t>(k)] = mistakes;
    all = all && mistakes == 0;
  }
  out.verdict = all ? Verdict::Pass : Verdict::Inconclusive;
  return out;
}

bool verify_separator(const Matrix& features, const Matrix& labels, const Matrix& witness) {
  const auto d = features.cols();
  if (witness.rows() != d + 1 || witness.cols() != labels.cols()) return false;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index k = 0; k < labels.cols(); ++k) {
      const double s = features.row(i).dot(witness.col(k).head(d)) + witness(d, k);
      const bool positive = labels(i, k) > 0.5;
      if (positive ? !(s > 0.0) : !(s < 0.0)) return false;
    }
  }
  return true;
}

ConditionReport check_corollary3(const NetworkArch& arch, const Params& params, const Dataset& data,
                                 const SubsetPlan& plan, double epsilon, std::uint64_t seed) {
  ConditionReport report;
  report.condition = "corollary3";
  const int L = arch.depth();
  report.assumptions.push_back(from_bool("relu", arch.activation == Activation::ReLU,
                                         "activation " + to_string(arch.activation), 0.0));
  if (L < 3) {
    report.assumptions.push_back(from_bool("depth", false, "needs L >= 3, got " + std::to_string(L), L - 3.0));
    return report;
  }
  plan.validate(arch);
  const double tmax = data.targets.cwiseAbs().maxCoeff();
  report.assumptions.push_back(from_bool("targets-bounded", tmax <= 1.0, "max |y| = " + fmt(tmax), 1.0 - tmax));
  const auto inputs = check_distinct(data.inputs);
  report.assumptions.push_back(from_bool("inputs-distinct", inputs.verdict == Verdict::Pass,
                                         "closest pair (" + std::to_string(inputs.first) + "," +
                                             std::to_string(inputs.second) + ") at " + fmt(inputs.distance),
                                         inputs.distance));

  const int keep = plan.cardinality(L - 1);
  const auto a1 = check_A1(arch, keep, data.size());
  report.assumptions.push_back({"A1", a1.verdict,
                                "half clause " + std::string(a1.half_clause ? "holds" : "fails") + ", product " +
                                    std::to_string(a1.product) + " vs N = " + std::to_string(a1.samples),
                                static_cast<double>(a1.product - a1.samples)});

  const auto a1b = check_A1b(arch, params, data, plan.at(L - 1), epsilon);
  report.assumptions.push_back({"A1-b", a1b.verdict,
                                "refit " + fmt(a1b.refit_loss) + " vs Phi " + fmt(a1b.reference_loss) +
                                    " + eps " + fmt(epsilon) + (a1b.refit.converged ? "" : " (iteration cap)"),
                                a1b.reference_loss + epsilon - a1b.refit_loss});

  const int n2 = arch.width(L - 2);
  const bool a2_card = plan.cardinality(L - 2) == (n2 + 1) / 2;
  const Matrix f2 = select_columns(forward_batch(arch, params, data.inputs, L - 2), plan.at(L - 2));
  const auto gp = check_generic_position(f2, 20000, 20000, seed);
  AssumptionVerdict a2{"A2", gp.verdict, gp.describe(), gp.min_ratio - kGenericRelTol};
  if (!a2_card) {
    a2.verdict = Verdict::Fail;
    a2.detail = "|I_{L-2}| = " + std::to_string(plan.cardinality(L - 2)) + ", needs " + std::to_string((n2 + 1) / 2);
  }
  report.assumptions.push_back(a2);

  for (int l = 1; l <= L - 3; ++l) {
    const std::string name = "A3[l=" + std::to_string(l) + "]";
    if (plan.cardinality(l) != arch.width(l) - 1) {
      report.assumptions.push_back(from_bool(name, false,
                                             "|I_l| = " + std::to_string(plan.cardinality(l)) + ", needs n_l - 1", -1.0));
      continue;
    }
    const auto dist = check_distinct(select_columns(forward_batch(arch, params, data.inputs, l), plan.at(l)));
    report.assumptions.push_back(from_bool(name, dist.verdict == Verdict::Pass,
                                           "closest pair (" + std::to_string(dist.first) + "," +
                                               std::to_string(dist.second) + ") at " + fmt(dist.distance),
                                           dist.distance));
  }
  return report;
}

SubsetPlan search_corollary3_plan(const NetworkArch& arch, const Params& params, const Dataset& data,
                                  int attempts, std::uint64_t seed) {
  const int L = arch.depth();
  if (L < 3) throw std::invalid_argument("corollary 3 needs at least two hidden layers");
  attempts = std::max(attempts, 1);
  Rng rng(seed);
  SubsetPlan plan;
  plan.anchor = 0;
  plan.kept.resize(static_cast<std::size_t>(L));
  plan.kept[0] = all_indices(arch.input_dim());

  for (int l = 1; l <= L - 3; ++l) {
    const int n = arch.width(l);
    const Matrix f = forward_batch(arch, params, data.inputs, l);
    std::vector<int> best;
    for (int drop = n - 1; drop >= 0 && drop >= n - attempts; --drop) {
      std::vector<int> kept;
      for (int j = 0; j < n; ++j) {
        if (j != drop) kept.push_back(j);
      }
      if (best.empty()) best = kept;
      if (check_distinct(select_columns(f, kept)).verdict == Verdict::Pass) {
        best = kept;
        break;
      }
    }
    plan.at(l) = best;
  }

  {
    const int n = arch.width(L - 2);
    const Matrix f = forward_batch(arch, params, data.inputs, L - 2);
    std::vector<int> chosen;
    for (int a = 0; a < attempts; ++a) {
      auto kept = candidate_subset(n, (n + 1) / 2, a, rng);
      if (chosen.empty()) chosen = kept;
      if (check_generic_position(select_columns(f, kept), 20000, 2000, seed).verdict == Verdict::Pass) {
        chosen = std::move(kept);
        break;
      }
    }
    plan.at(L - 2) = chosen;
  }

  {
    const int n = arch.width(L - 1);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> chosen;
    for (int a = 0; a < attempts; ++a) {
      auto kept = candidate_subset(n, (n + 1) / 2, a, rng);
      const double loss = check_A1b(arch, params, data, kept, 0.0, 2000).refit_loss;
      if (loss < best) {
        best = loss;
        chosen = std::move(kept);
      }
    }
    plan.at(L - 1) = chosen;
  }
  plan.validate(arch);
  return plan;
}

ConditionReport check_corollary4(const NetworkArch& arch, const Params& params, const Dataset& data,
                                 const SubsetPlan& plan, long max_epochs) {
  ConditionReport report;
  report.condition = "corollary4";
  const int L = arch.depth();
  plan.validate(arch);
  report.assumptions.push_back(from_bool("cross-entropy", arch.loss == LossKind::CrossEntropy,
                                         "loss " + to_string(arch.loss), 0.0));
  // ReLU and LeakyReLU are strictly increasing on [1, 2]; no runtime check.
  const int c = arch.output_dim();
  for (int l = 1; l <= L - 1; ++l) {
    const int n = arch.width(l);
    const int k = plan.cardinality(l);
    const bool ok = n >= 2 * c && 2 * k >= n && k <= n - c;
    report.assumptions.push_back(from_bool("width[l=" + std::to_string(l) + "]", ok,
                                           "n = " + std::to_string(n) + ", |I| = " + std::to_string(k) +
                                               ", n_L = " + std::to_string(c),
                                           std::min({n - 2.0 * c, 2.0 * k - n, n - c - static_cast<double>(k)})));
  }
  for (int l = 0; l <= L - 1; ++l) {
    const Matrix f = select_columns(forward_batch(arch, params, data.inputs, l), plan.at(l));
    const auto sep = check_linear_separability(f, data.targets, max_epochs);
    const bool verified = sep.verdict == Verdict::Pass && verify_separator(f, data.targets, sep.witness);
    AssumptionVerdict v{"separable[l=" + std::to_string(l) + "]", verified ? Verdict::Pass : Verdict::Inconclusive,
                        verified ? "perceptron witness after " + std::to_string(sep.epochs) + " epochs"
                                 : "not separated within " + std::to_string(sep.epochs) + " epochs",
                        verified ? 0.0 : -1.0};
    report.assumptions.push_back(v);
  }
  return report;
}

SubsetPlan search_corollary4_plan(const NetworkArch& arch, const Params& params, const Dataset& data,
                                  int attempts, std::uint64_t seed, long max_epochs) {
  const int L = arch.depth();
  attempts = std::max(attempts, 1);
  Rng rng(seed);
  SubsetPlan plan;
  plan.anchor = 0;
  plan.kept.resize(static_cast<std::size_t>(L));
  plan.kept[0] = all_indices(arch.input_dim());
  for (int l = 1; l <= L - 1; ++l) {
    const int n = arch.width(l);
    const int k = std::max((n + 1) / 2, n - arch.output_dim());
    const Matrix f = forward_batch(arch, params, data.inputs, l);
    std::vector<int> chosen;
    for (int a = 0; a < attempts; ++a) {
      auto kept = candidate_subset(n, k, a, rng);
      if (chosen.empty()) chosen = kept;
      const Matrix sub = select_columns(f, kept);
      const auto sep = check_linear_separability(sub, data.targets, max_epochs);
      if (sep.verdict == Verdict::Pass) {
        chosen = std::move(kept);
        break;
      }
    }
    plan.at(l) = chosen;
  }
  plan.validate(arch);
  return plan;
}

ConditionReport check_dropout_stable(const NetworkArch& arch, const Params& params, const Dataset& data,
                                     double epsilon, int trials, double drop_ratio, std::uint64_t seed, int jobs) {
  if (trials < 1) throw std::invalid_argument("dropout stability needs trials >= 1");
  ConditionReport report;
  report.condition = "dropout-stable";
  const double phi = average_loss(arch, params, data);
  for (const auto& layer : dropout_stability_curve(arch, params, data, trials, drop_ratio, seed, jobs)) {
    const double margin = phi + epsilon - layer.best_loss;
    report.assumptions.push_back(from_bool("dropout[l=" + std::to_string(layer.layer) + "]", margin >= 0.0,
                                           "best rescaled loss " + fmt(layer.best_loss) + " (r = " +
                                               fmt(layer.best_scale) + ") vs Phi " + fmt(phi),
                                           margin));
  }
  return report;
}

}  // namespace mcpath
