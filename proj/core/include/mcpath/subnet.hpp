#pragma once

// Sparse subnetworks anchored at a layer l: inputs are a kept subset of the
// layer-l features, hidden widths are the complement sizes n_p - |I_p| of the
// layers above, and the output width is n_L. Experiment A (min over sampled
// subsets of the SGD-trained subnet loss) and Experiment B (random neuron
// removal plus a scalar output rescale) live here.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mcpath/network.hpp"
#include "mcpath/rng.hpp"

namespace mcpath {

// Kept index sets I_p for p in [anchor, L-1]; kept[0] is I_anchor. With
// anchor 0, kept[0] is the full input set by convention, and the plan fixes a
// subset for every hidden layer.
struct SubsetPlan {
  int anchor = 0;
  std::vector<std::vector<int>> kept;

  const std::vector<int>& at(int layer) const;
  std::vector<int>& at(int layer);
  int cardinality(int layer) const { return static_cast<int>(at(layer).size()); }
  // Sorted complement [n_p] \ I_p.
  std::vector<int> complement(const NetworkArch& arch, int layer) const;

  // Sorted, unique, in range, I_0 = [n_0]. With require_half also |I_p| >= n_p / 2.
  void validate(const NetworkArch& arch, bool require_half = false) const;

  // Lowest-index plan with the given cardinalities K_anchor..K_{L-1}.
  static SubsetPlan leading(const NetworkArch& arch, int anchor, const std::vector<int>& cards);

  bool operator==(const SubsetPlan&) const = default;
};

// K_l = ceil((1 - p) n_l) for every layer in [anchor, L-1]; K_0 = n_0.
std::vector<int> keep_cardinalities(const NetworkArch& arch, int anchor, double drop_ratio);

// Weights of a subnetwork anchored at `anchor`: U_p of shape m_{p-1} x m_p
// for p in [anchor+1, L], biases v_p for p in [anchor+1, L-1]. Instances can
// only be created with consistent shapes.
class SubnetParams {
 public:
  // Throws ShapeError if any matrix disagrees with `widths` (m_anchor..m_L).
  SubnetParams(int anchor, std::vector<int> widths, std::vector<Matrix> weights,
               std::vector<Vector> biases);

  static SubnetParams zeros(int anchor, const std::vector<int>& widths);

  int anchor() const noexcept { return anchor_; }
  const std::vector<int>& widths() const noexcept { return widths_; }
  // U_p / v_p with p counted in host layers (anchor+1 .. L).
  const Matrix& U(int host_layer) const;
  const Vector& v(int host_layer) const;
  int output_layer() const noexcept { return anchor_ + static_cast<int>(widths_.size()) - 1; }

  // The subnet as a standalone network with the host's activation and loss.
  NetworkArch standalone_arch(const NetworkArch& host) const;
  Params standalone_params() const;
  static SubnetParams from_standalone(int anchor, const NetworkArch& arch, const Params& params);

  bool operator==(const SubnetParams&) const = default;

 private:
  int anchor_;
  std::vector<int> widths_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

// (m_l, ..., m_L) for the plan's anchor.
std::vector<int> subnet_widths(const NetworkArch& arch, const SubsetPlan& plan);
// Same, from cardinalities K_anchor..K_{L-1} only.
std::vector<int> subnet_widths(const NetworkArch& arch, int anchor, const std::vector<int>& cards);

// Dataset whose inputs are f_{l, kept}(theta, x_j); targets unchanged.
Dataset extract_features(const NetworkArch& arch, const Params& params, const Dataset& data,
                         int layer, const std::vector<int>& kept);

// h_L(xi, z). Activation taken from the host architecture.
Vector subnet_forward(const NetworkArch& host, const SubnetParams& xi, const Vector& z);
Matrix subnet_forward_batch(const NetworkArch& host, const SubnetParams& xi, const Matrix& z);

struct SubnetTrainResult {
  SubnetParams xi;
  double achieved_loss;  // best full-data loss seen, never an infimum
  double error_rate;
  int epochs_run;
};

// SGD on the subnet as a standalone network over `features`. Starts from
// `init` when given, else from init_params(cfg.seed). Returns the best
// checkpoint (evaluated after every epoch and at the start).
SubnetTrainResult train_subnet(const NetworkArch& host, int anchor, const Dataset& features,
                               const std::vector<int>& widths, const TrainConfig& cfg,
                               const std::optional<SubnetParams>& init = std::nullopt);

struct TrialRecord {
  int layer = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::uint64_t subset_hash = 0;
  std::optional<double> loss;  // empty when the trial failed
  double error_rate = 0.0;
  double wall_ms = 0.0;
  std::string failure;
};

struct QEstimate {
  int layer = 0;
  double best_loss = 0.0;
  double best_error = 0.0;
  SubsetPlan plan;  // kept[0] = winning I_l; higher layers hold leading sets (only sizes matter)
  SubnetParams xi;
  std::vector<TrialRecord> trials;
};

// Q~_l: for each trial t (seed cfg.seed + t) sample I_l of size cards[0]
// uniformly, train a subnet with widths from `cards`, keep the minimum.
// Failed trials are recorded; throws only if every trial fails.
QEstimate estimate_q_tilde(const NetworkArch& arch, const Params& params, const Dataset& data,
                           int layer, const std::vector<int>& cards, int trials,
                           const TrainConfig& cfg, int jobs = 1);

struct DropoutCandidate {
  Params params;
  int layer = 0;
  std::vector<std::vector<int>> kept;  // per p in [layer, L-1]
};

// Removes floor(p * n_q) random neurons at each q in [layer, L-1], zeroing
// their incoming weights, bias and outgoing weights exactly.
DropoutCandidate dropout_candidate(const NetworkArch& arch, const Params& params, int layer,
                                   double drop_ratio, Rng& rng);

struct RescaleResult {
  double scale = 1.0;
  double loss = 0.0;
};

// 1-D minimization of r -> loss(r) over [1e-3, 1e3]: log-spaced bracketing
// followed by Brent (golden section + parabolic) refinement, tolerance 1e-6
// on r. Non-finite values are treated as +inf; if nothing finite is found,
// returns r = 1.
RescaleResult minimize_rescale(const std::function<double(double)>& loss_of_scale);

// Optimal scalar on the candidate's output logits.
RescaleResult optimize_rescale(const NetworkArch& arch, const Params& candidate, const Dataset& data);

struct DropoutLayerResult {
  int layer = 0;
  double best_loss = 0.0;
  double best_error = 0.0;
  double best_scale = 1.0;
  std::vector<std::vector<int>> best_kept;
  std::vector<TrialRecord> trials;
};

// Experiment B for l in [1, L-1]: min over `trials` candidates of the
// rescaled loss. Trial t of layer l draws from Rng::derive(seed + t, l).
std::vector<DropoutLayerResult> dropout_stability_curve(const NetworkArch& arch, const Params& params,
                                                        const Dataset& data, int trials,
                                                        double drop_ratio, std::uint64_t seed,
                                                        int jobs = 1);

// Realizes a rescaled dropout candidate as a subnet anchored at its layer:
// I_l = kept set at l, hidden units copy the surviving neurons, U_L carries
// the scale. Complement widths must be at least the surviving counts above
// l; spare subnet units are zero.
std::pair<SubsetPlan, SubnetParams> realize_dropout_as_subnet(const NetworkArch& arch,
                                                              const DropoutCandidate& candidate,
                                                              double scale);

}  // namespace mcpath

namespace mcpath {

// Experiment A at one trained point theta': Q~_l for every l in [0, L-1]
// with K_l = ceil((1 - p) n_l).
struct EndpointBound {
  double reference_loss = 0.0;   // Phi(theta')
  double reference_error = 0.0;
  std::vector<QEstimate> layers;  // index = anchor layer l

  double max_q_tilde() const;
  // max(Phi(theta'), max_l Q~_l): this endpoint's share of the bound.
  double bound() const;
  // Anchor-0 plan whose I_l is the winning subset of layer l.
  SubsetPlan collection(const NetworkArch& arch) const;
};

struct BoundReport {
  double drop_ratio = 0.5;
  int trials = 0;
  std::vector<EndpointBound> endpoints;

  // max over endpoints of max(Phi(theta'), max_l Q~_l), from achieved losses.
  double rhs() const;
};

EndpointBound experiment_a(const NetworkArch& arch, const Params& params, const Dataset& data,
                           double drop_ratio, int trials, const TrainConfig& cfg, int jobs = 1);

}  // namespace mcpath
