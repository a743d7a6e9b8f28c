#include "mcpath/subnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "mcpath/parallel.hpp"

namespace mcpath {

const std::vector<int>& SubsetPlan::at(int layer) const {
  return kept.at(static_cast<std::size_t>(layer - anchor));
}

std::vector<int>& SubsetPlan::at(int layer) {
  return kept.at(static_cast<std::size_t>(layer - anchor));
}

std::vector<int> SubsetPlan::complement(const NetworkArch& arch, int layer) const {
  const auto& in = at(layer);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(arch.width(layer)) - in.size());
  std::size_t j = 0;
  for (int i = 0; i < arch.width(layer); ++i) {
    if (j < in.size() && in[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

void SubsetPlan::validate(const NetworkArch& arch, bool require_half) const {
  const int L = arch.depth();
  if (anchor < 0 || anchor > L - 1) throw std::invalid_argument("plan anchor outside [0, L-1]");
  if (static_cast<int>(kept.size()) != L - anchor) {
    throw std::invalid_argument("plan must list one subset per layer in [anchor, L-1]");
  }
  for (int p = anchor; p <= L - 1; ++p) {
    const auto& s = at(p);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= arch.width(p)) {
        throw std::invalid_argument("plan index out of range at layer " + std::to_string(p));
      }
      if (i > 0 && s[i] <= s[i - 1]) {
        throw std::invalid_argument("plan indices not sorted/unique at layer " + std::to_string(p));
      }
    }
    if (p == 0 && static_cast<int>(s.size()) != arch.width(0)) {
      throw std::invalid_argument("I_0 must be the full input set");
    }
    if (require_half && p > 0 && 2 * static_cast<int>(s.size()) < arch.width(p)) {
      throw std::invalid_argument("|I_" + std::to_string(p) + "| < n_p / 2");
    }
  }
}

SubsetPlan SubsetPlan::leading(const NetworkArch& arch, int anchor, const std::vector<int>& cards) {
  SubsetPlan plan;
  plan.anchor = anchor;
  for (std::size_t i = 0; i < cards.size(); ++i) {
    std::vector<int> s(static_cast<std::size_t>(cards[i]));
    std::iota(s.begin(), s.end(), 0);
    plan.kept.push_back(std::move(s));
  }
  plan.validate(arch);
  return plan;
}

std::vector<int> keep_cardinalities(const NetworkArch& arch, int anchor, double drop_ratio) {
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0)) throw std::invalid_argument("drop ratio must lie in [0, 1)");
  std::vector<int> cards;
  for (int p = anchor; p <= arch.depth() - 1; ++p) {
    if (p == 0) {
      cards.push_back(arch.width(0));
      continue;
    }
    const int n = arch.width(p);
    // The guard absorbs representation error in (1 - p) n, e.g. p = 1/3.
    const int k = static_cast<int>(std::ceil((1.0 - drop_ratio) * n - 1e-9));
    cards.push_back(std::clamp(k, 1, n));
  }
  return cards;
}

SubnetParams::SubnetParams(int anchor, std::vector<int> widths, std::vector<Matrix> weights,
                           std::vector<Vector> biases)
    : anchor_(anchor), widths_(std::move(widths)), weights_(std::move(weights)), biases_(std::move(biases)) {
  const std::size_t depth = widths_.size() - 1;
  if (widths_.size() < 2) throw ShapeError(anchor_, "subnet needs at least two widths");
  if (weights_.size() != depth) throw ShapeError(anchor_, "subnet weight count disagrees with widths");
  if (biases_.size() != depth - 1) throw ShapeError(anchor_, "subnet bias count disagrees with widths");
  for (std::size_t i = 0; i < depth; ++i) {
    const int host_layer = anchor_ + static_cast<int>(i) + 1;
    if (weights_[i].rows() != widths_[i] || weights_[i].cols() != widths_[i + 1]) {
      throw ShapeError(host_layer, "U has shape " + std::to_string(weights_[i].rows()) + "x" +
                                       std::to_string(weights_[i].cols()) + ", expected " +
                                       std::to_string(widths_[i]) + "x" + std::to_string(widths_[i + 1]));
    }
    if (i + 1 < depth && biases_[i].size() != widths_[i + 1]) {
      throw ShapeError(host_layer, "v has wrong length");
    }
  }
}

SubnetParams SubnetParams::zeros(int anchor, const std::vector<int>& widths) {
  std::vector<Matrix> w;
  std::vector<Vector> b;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    w.push_back(Matrix::Zero(widths[i], widths[i + 1]));
    if (i + 2 < widths.size()) b.push_back(Vector::Zero(widths[i + 1]));
  }
  return SubnetParams(anchor, widths, std::move(w), std::move(b));
}

const Matrix& SubnetParams::U(int host_layer) const {
  return weights_.at(static_cast<std::size_t>(host_layer - anchor_ - 1));
}

const Vector& SubnetParams::v(int host_layer) const {
  return biases_.at(static_cast<std::size_t>(host_layer - anchor_ - 1));
}

NetworkArch SubnetParams::standalone_arch(const NetworkArch& host) const {
  return host.with_widths(widths_);
}

Params SubnetParams::standalone_params() const {
  Params p;
  p.weights = weights_;
  p.biases = biases_;
  return p;
}

SubnetParams SubnetParams::from_standalone(int anchor, const NetworkArch& arch, const Params& params) {
  return SubnetParams(anchor, arch.widths, params.weights, params.biases);
}

std::vector<int> subnet_widths(const NetworkArch& arch, int anchor, const std::vector<int>& cards) {
  const int L = arch.depth();
  if (static_cast<int>(cards.size()) != L - anchor) {
    throw std::invalid_argument("need one cardinality per layer in [anchor, L-1]");
  }
  std::vector<int> m;
  m.push_back(cards[0]);
  for (int p = anchor + 1; p <= L - 1; ++p) m.push_back(arch.width(p) - cards[static_cast<std::size_t>(p - anchor)]);
  m.push_back(arch.output_dim());
  return m;
}

std::vector<int> subnet_widths(const NetworkArch& arch, const SubsetPlan& plan) {
  plan.validate(arch);
  std::vector<int> cards;
  for (const auto& s : plan.kept) cards.push_back(static_cast<int>(s.size()));
  return subnet_widths(arch, plan.anchor, cards);
}

Dataset extract_features(const NetworkArch& arch, const Params& params, const Dataset& data,
                         int layer, const std::vector<int>& kept) {
  const Matrix f = forward_batch(arch, params, data.inputs, layer);
  Dataset out;
  out.targets = data.targets;
  out.inputs.resize(f.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) {
    if (kept[c] < 0 || kept[c] >= f.cols()) throw std::out_of_range("kept index outside layer width");
    out.inputs.col(static_cast<Eigen::Index>(c)) = f.col(kept[c]);
  }
  return out;
}

Vector subnet_forward(const NetworkArch& host, const SubnetParams& xi, const Vector& z) {
  const auto& m = xi.widths();
  if (z.size() != m.front()) throw ShapeError(xi.anchor(), "subnet input has wrong dimension");
  Vector h = z;
  const int last = xi.output_layer();
  for (int p = xi.anchor() + 1; p <= last; ++p) {
    Vector next = xi.U(p).transpose() * h;
    if (p < last) {
      next += xi.v(p);
      for (Eigen::Index i = 0; i < next.size(); ++i) next[i] = activate(host, next[i]);
    }
    h = std::move(next);
  }
  return h;
}

Matrix subnet_forward_batch(const NetworkArch& host, const SubnetParams& xi, const Matrix& z) {
  if (z.cols() != xi.widths().front()) throw ShapeError(xi.anchor(), "subnet inputs have wrong dimension");
  Matrix h = z;
  const int last = xi.output_layer();
  for (int p = xi.anchor() + 1; p <= last; ++p) {
    Matrix next = h * xi.U(p);
    if (p < last) {
      next.rowwise() += xi.v(p).transpose();
      next = next.unaryExpr([&host](double v) { return activate(host, v); });
    }
    h = std::move(next);
  }
  return h;
}

SubnetTrainResult train_subnet(const NetworkArch& host, int anchor, const Dataset& features,
                               const std::vector<int>& widths, const TrainConfig& cfg,
                               const std::optional<SubnetParams>& init) {
  const NetworkArch arch = host.with_widths(widths);
  if (features.inputs.cols() != widths.front()) throw ShapeError(anchor, "features disagree with subnet input width");
  // Zero-width hidden layers are legal (every neuron of that layer kept);
  // the subnet output is then identically zero and there is nothing to fit.
  const bool degenerate = std::any_of(widths.begin(), widths.end(), [](int w) { return w < 1; });
  Params start;
  if (init) {
    if (init->widths() != widths) throw ShapeError(anchor, "initial subnet widths disagree");
    start = init->standalone_params();
  } else {
    start = degenerate ? Params::zeros(arch) : init_params(arch, cfg.seed);
  }
  TrainResult r;
  if (degenerate) {
    r.params = start;
    r.best_params = start;
    r.best_loss = average_loss(arch, start, features);
  } else {
    r = sgd_train(arch, start, features, cfg);
  }
  SubnetTrainResult out{SubnetParams::from_standalone(anchor, arch, r.best_params), r.best_loss, 0.0,
                        r.epochs_run};
  out.error_rate = classification_error(arch, r.best_params, features);
  return out;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

QEstimate estimate_q_tilde(const NetworkArch& arch, const Params& params, const Dataset& data,
                           int layer, const std::vector<int>& cards, int trials,
                           const TrainConfig& cfg, int jobs) {
  if (trials < 1) throw std::invalid_argument("estimate_q_tilde needs at least one trial");
  const int L = arch.depth();
  if (layer < 0 || layer > L - 1) throw std::out_of_range("anchor layer outside [0, L-1]");
  const std::vector<int> widths = subnet_widths(arch, layer, cards);
  const Matrix features = forward_batch(arch, params, data.inputs, layer);

  struct Outcome {
    TrialRecord record;
    std::vector<int> subset;
    std::optional<SubnetTrainResult> trained;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(trials));

  parallel_for(outcomes.size(), jobs, [&](std::size_t t) {
    const auto start = std::chrono::steady_clock::now();
    Outcome& o = outcomes[t];
    o.record.layer = layer;
    o.record.trial = static_cast<int>(t);
    o.record.seed = cfg.seed + t;
    Rng rng(Rng::derive(o.record.seed, static_cast<std::uint64_t>(layer)));
    o.subset = rng.sample_without_replacement(arch.width(layer), cards[0]);
    o.record.subset_hash = hash_indices(o.subset);
    Dataset feats;
    feats.targets = data.targets;
    feats.inputs.resize(features.rows(), static_cast<Eigen::Index>(o.subset.size()));
    for (std::size_t c = 0; c < o.subset.size(); ++c) {
      feats.inputs.col(static_cast<Eigen::Index>(c)) = features.col(o.subset[c]);
    }
    TrainConfig trial_cfg = cfg;
    trial_cfg.seed = o.record.seed;
    try {
      o.trained = train_subnet(arch, layer, feats, widths, trial_cfg);
      o.record.loss = o.trained->achieved_loss;
      o.record.error_rate = o.trained->error_rate;
    } catch (const Error& e) {
      o.record.failure = e.what();
    }
    o.record.wall_ms = elapsed_ms(start);
  });

  std::optional<std::size_t> best;
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    if (!outcomes[t].record.loss) continue;
    if (!best || *outcomes[t].record.loss < *outcomes[*best].record.loss) best = t;
  }
  if (!best) throw Error("every Q~ trial failed at layer " + std::to_string(layer) + ": " + outcomes.front().record.failure);

  SubsetPlan plan = SubsetPlan::leading(arch, layer, cards);
  plan.kept[0] = outcomes[*best].subset;
  QEstimate est{layer, *outcomes[*best].record.loss, outcomes[*best].record.error_rate, std::move(plan),
                outcomes[*best].trained->xi, {}};
  for (auto& o : outcomes) est.trials.push_back(std::move(o.record));
  return est;
}

DropoutCandidate dropout_candidate(const NetworkArch& arch, const Params& params, int layer,
                                   double drop_ratio, Rng& rng) {
  const int L = arch.depth();
  if (layer < 1 || layer > L - 1) throw std::out_of_range("dropout layer outside [1, L-1]");
  if (!(drop_ratio > 0.0 && drop_ratio < 1.0)) throw std::invalid_argument("drop ratio must lie in (0, 1)");
  const std::vector<int> cards = keep_cardinalities(arch, layer, drop_ratio);
  DropoutCandidate cand{params, layer, {}};
  for (int q = layer; q <= L - 1; ++q) {
    const int n = arch.width(q);
    const int keep = cards[static_cast<std::size_t>(q - layer)];
    std::vector<int> kept = rng.sample_without_replacement(n, keep);
    std::vector<bool> is_kept(static_cast<std::size_t>(n), false);
    for (int k : kept) is_kept[static_cast<std::size_t>(k)] = true;
    for (int j = 0; j < n; ++j) {
      if (is_kept[static_cast<std::size_t>(j)]) continue;
      cand.params.W(q).col(j).setZero();
      cand.params.b(q)[j] = 0.0;
      cand.params.W(q + 1).row(j).setZero();
    }
    cand.kept.push_back(std::move(kept));
  }
  return cand;
}

RescaleResult minimize_rescale(const std::function<double(double)>& loss_of_scale) {
  constexpr double kLo = 1e-3;
  constexpr double kHi = 1e3;
  constexpr int kGrid = 61;  // ten points per decade
  auto safe = [&](double r) {
    double v = std::numeric_limits<double>::infinity();
    try {
      v = loss_of_scale(r);
    } catch (const Error&) {
    }
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<double> grid(kGrid);
  std::vector<double> values(kGrid);
  int best = -1;
  for (int i = 0; i < kGrid; ++i) {
    grid[static_cast<std::size_t>(i)] = kLo * std::pow(kHi / kLo, static_cast<double>(i) / (kGrid - 1));
    values[static_cast<std::size_t>(i)] = safe(grid[static_cast<std::size_t>(i)]);
    if (std::isfinite(values[static_cast<std::size_t>(i)]) &&
        (best < 0 || values[static_cast<std::size_t>(i)] < values[static_cast<std::size_t>(best)])) {
      best = i;
    }
  }
  if (best < 0) return {1.0, safe(1.0)};

  const double lo = grid[static_cast<std::size_t>(std::max(best - 1, 0))];
  const double hi = grid[static_cast<std::size_t>(std::min(best + 1, kGrid - 1))];
  std::uintmax_t max_iter = 500;
  // 2^-30 relative precision keeps |dr| below 1e-6 for r <= 1e3.
  const auto [r, v] = boost::math::tools::brent_find_minima(safe, lo, hi, 30, max_iter);
  if (v <= values[static_cast<std::size_t>(best)]) return {r, v};
  return {grid[static_cast<std::size_t>(best)], values[static_cast<std::size_t>(best)]};
}

RescaleResult optimize_rescale(const NetworkArch& arch, const Params& candidate, const Dataset& data) {
  const Matrix logits = forward_batch(arch, candidate, data.inputs, arch.depth());
  return minimize_rescale([&](double r) { return loss_from_outputs(arch.loss, r * logits, data.targets); });
}

std::vector<DropoutLayerResult> dropout_stability_curve(const NetworkArch& arch, const Params& params,
                                                        const Dataset& data, int trials,
                                                        double drop_ratio, std::uint64_t seed, int jobs) {
  if (trials < 1) throw std::invalid_argument("dropout_stability_curve needs at least one trial");
  const int L = arch.depth();
  std::vector<DropoutLayerResult> curve;
  for (int l = 1; l <= L - 1; ++l) {
    struct Outcome {
      TrialRecord record;
      double scale = 1.0;
      std::vector<std::vector<int>> kept;
    };
    std::vector<Outcome> outcomes(static_cast<std::size_t>(trials));
    parallel_for(outcomes.size(), jobs, [&](std::size_t t) {
      const auto start = std::chrono::steady_clock::now();
      Outcome& o = outcomes[t];
      o.record.layer = l;
      o.record.trial = static_cast<int>(t);
      o.record.seed = seed + t;
      Rng rng(Rng::derive(o.record.seed, static_cast<std::uint64_t>(l)));
      DropoutCandidate cand = dropout_candidate(arch, params, l, drop_ratio, rng);
      o.record.subset_hash = hash_indices(cand.kept.front());
      try {
        const Matrix logits = forward_batch(arch, cand.params, data.inputs, L);
        const RescaleResult rr = minimize_rescale(
            [&](double r) { return loss_from_outputs(arch.loss, r * logits, data.targets); });
        if (!std::isfinite(rr.loss)) throw NonFiniteLossError("rescaled loss is not finite");
        o.record.loss = rr.loss;
        o.record.error_rate = error_from_outputs(rr.scale * logits, data.targets);
        o.scale = rr.scale;
      } catch (const Error& e) {
        o.record.failure = e.what();
      }
      o.kept = std::move(cand.kept);
      o.record.wall_ms = elapsed_ms(start);
    });
    DropoutLayerResult res;
    res.layer = l;
    std::optional<std::size_t> best;
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
      if (!outcomes[t].record.loss) continue;
      if (!best || *outcomes[t].record.loss < *outcomes[*best].record.loss) best = t;
    }
    if (!best) throw Error("every dropout trial failed at layer " + std::to_string(l));
    res.best_loss = *outcomes[*best].record.loss;
    res.best_error = outcomes[*best].record.error_rate;
    res.best_scale = outcomes[*best].scale;
    res.best_kept = outcomes[*best].kept;
    for (auto& o : outcomes) res.trials.push_back(std::move(o.record));
    curve.push_back(std::move(res));
  }
  return curve;
}

std::pair<SubsetPlan, SubnetParams> realize_dropout_as_subnet(const NetworkArch& arch,
                                                              const DropoutCandidate& candidate,
                                                              double scale) {
  const int L = arch.depth();
  const int l = candidate.layer;
  SubsetPlan plan{l, candidate.kept};
  plan.validate(arch);
  const std::vector<int> m = subnet_widths(arch, plan);
  for (int p = l + 1; p <= L - 1; ++p) {
    if (m[static_cast<std::size_t>(p - l)] < plan.cardinality(p)) {
      throw ShapeError(p, "complement width " + std::to_string(m[static_cast<std::size_t>(p - l)]) +
                              " cannot host " + std::to_string(plan.cardinality(p)) + " surviving neurons");
    }
  }
  const Params& w = candidate.params;
  std::vector<Matrix> U;
  std::vector<Vector> v;
  for (int p = l + 1; p <= L; ++p) {
    const auto& rows = plan.at(p - 1);
    Matrix u = Matrix::Zero(m[static_cast<std::size_t>(p - l - 1)], m[static_cast<std::size_t>(p - l)]);
    if (p < L) {
      const auto& cols = plan.at(p);
      Vector bias = Vector::Zero(u.cols());
      for (std::size_t k = 0; k < cols.size(); ++k) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = w.W(p)(rows[i], cols[k]);
        }
        bias[static_cast<Eigen::Index>(k)] = w.b(p)[cols[k]];
      }
      v.push_back(std::move(bias));
    } else {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        u.row(static_cast<Eigen::Index>(i)) = scale * w.W(L).row(rows[i]);
      }
    }
    U.push_back(std::move(u));
  }
  return {plan, SubnetParams(l, m, std::move(U), std::move(v))};
}

}  // namespace mcpath

namespace mcpath {

double EndpointBound::max_q_tilde() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& q : layers) m = std::max(m, q.best_loss);
  return m;
}

double EndpointBound::bound() const { return std::max(reference_loss, max_q_tilde()); }

SubsetPlan EndpointBound::collection(const NetworkArch& arch) const {
  SubsetPlan plan;
  plan.anchor = 0;
  std::vector<int> inputs(static_cast<std::size_t>(arch.input_dim()));
  std::iota(inputs.begin(), inputs.end(), 0);
  plan.kept.push_back(std::move(inputs));
  for (int l = 1; l <= arch.depth() - 1; ++l) {
    plan.kept.push_back(layers.at(static_cast<std::size_t>(l)).plan.kept.front());
  }
  plan.validate(arch);
  return plan;
}

double BoundReport::rhs() const {
  double r = -std::numeric_limits<double>::infinity();
  for (const auto& e : endpoints) r = std::max(r, e.bound());
  return r;
}

EndpointBound experiment_a(const NetworkArch& arch, const Params& params, const Dataset& data,
                           double drop_ratio, int trials, const TrainConfig& cfg, int jobs) {
  EndpointBound out;
  out.reference_loss = average_loss(arch, params, data);
  out.reference_error = classification_error(arch, params, data);
  for (int l = 0; l <= arch.depth() - 1; ++l) {
    out.layers.push_back(estimate_q_tilde(arch, params, data, l, keep_cardinalities(arch, l, drop_ratio),
                                          trials, cfg, jobs));
  }
  return out;
}

}  // namespace mcpath
