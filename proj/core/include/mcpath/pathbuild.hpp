#pragma once

// Continuous piecewise-linear paths in parameter space and the segment
// builders that connect two trained networks through sparsified states.
//
// Every builder returns a path whose first breakpoint is bitwise equal to its
// input and whose interior keeps the network output fixed, except the
// output-weight interpolations, which only move W_L (the loss is convex in
// W_L, so those segments never exceed their endpoint losses).

#include <string>
#include <vector>

#include "mcpath/network.hpp"
#include "mcpath/subnet.hpp"

namespace mcpath {

enum class SegmentKind { SwapA, SwapB, SwapC, ZeroIncoming, SetIncoming, OutputInterp, BridgeOutput };

struct SegmentLabel {
  SegmentKind kind = SegmentKind::OutputInterp;
  bool reversed = false;

  // "swap-a", ..., "bridge-output", or "reverse-of:<tag>".
  std::string str() const;
  static SegmentLabel parse(const std::string& text);
  // True for the kinds along which f_L(theta(t), x) is constant.
  bool output_invariant() const noexcept;

  bool operator==(const SegmentLabel&) const = default;
};

// theta(t): breakpoints joined by straight segments; segment s covers
// t in [s / S, (s + 1) / S]. A single breakpoint is the empty path.
struct PWLPath {
  NetworkArch arch;
  std::vector<Params> breakpoints;
  std::vector<SegmentLabel> labels;

  static PWLPath starting_at(NetworkArch arch, Params start);

  std::size_t segment_count() const noexcept { return labels.size(); }
  const Params& front() const { return breakpoints.front(); }
  const Params& back() const { return breakpoints.back(); }

  void push(Params next, SegmentLabel label);
  // Appends `tail`; its first breakpoint must be identical to back().
  void append(const PWLPath& tail);
  PWLPath reversed() const;

  Params at(double t) const;
  Params at(std::size_t segment, double lambda) const;
};

// New incoming weight column and bias for one hidden neuron.
struct IncomingAssignment {
  int layer = 0;
  int neuron = 0;
  Vector weights;  // length n_{layer-1}
  double bias = 0.0;
};

// True when the neuron's incoming weights, bias and outgoing weights are all
// exactly zero.
bool is_pure_zero(const NetworkArch& arch, const Params& params, int layer, int neuron);

// Three segments (copy q's incoming into p; move q's outgoing mass onto p;
// zero q's incoming). `pure_zero` must be pure zero and differ from `other`.
PWLPath swap_neurons_path(const NetworkArch& arch, const Params& params, int layer, int pure_zero, int other);

// One segment to zero incoming weights and biases of `neurons` at `layer`.
// Their outgoing weights must already be zero.
PWLPath zero_out_incoming(const NetworkArch& arch, const Params& params, int layer,
                          const std::vector<int>& neurons);

// One segment writing arbitrary incoming weights into output-silent neurons:
// every weight from an assigned neuron to a non-assigned neuron (or to the
// output) must be zero at both ends of the segment.
PWLPath set_incoming(const NetworkArch& arch, const Params& params,
                     const std::vector<IncomingAssignment>& assignments);

struct EmbedResult {
  Params params;                              // host with incoming blocks written and W_L switched
  std::vector<IncomingAssignment> incoming;  // hidden-layer writes, in layer order
  Matrix output_weights;                      // the W_L that activates the subnet alone
};

// Places xi (anchored at plan.anchor) into the host: U_{l+1} maps I_l onto
// the complement of I_{l+1}, U_p maps complement to complement, U_L fills
// the complement rows of W_L (the I_{L-1} rows when l = L-1). Complement
// positions above l must be pure zero in the host.
EmbedResult embed(const NetworkArch& arch, const SubnetParams& xi, const SubsetPlan& plan, const Params& host);

// One segment moving only W_L to `target`.
PWLPath output_interp(const NetworkArch& arch, const Params& params, const Matrix& target,
                      SegmentKind kind = SegmentKind::OutputInterp);

struct SparsifyResult {
  PWLPath path;
  Params sparse;  // every complement neuron of `plan` is pure zero
};

// Drives the complement of every I_l (l = L-1 .. 1) to pure zero. `plan` is
// anchored at 0 with |I_l| >= n_l / 2; `subnets` holds one subnet per anchor
// l in [1, L-1] whose widths match the plan's complements.
SparsifyResult sparsify_path(const NetworkArch& arch, const Params& params, const SubsetPlan& plan,
                             const std::vector<SubnetParams>& subnets);

// Swaps neurons until the pure-zero positions of `sparse` (complements of
// `from`) become the complements of `to`. Layers bottom-up, indices ascending.
PWLPath align_subsets(const NetworkArch& arch, const Params& sparse, const SubsetPlan& from, const SubsetPlan& to);

// Connects two sparsified points sharing the pure-zero positions of `plan`
// through the anchor-0 subnet xi0 hosted on those positions.
PWLPath bridge_sparsified(const NetworkArch& arch, const Params& sparse_a, const Params& sparse_b,
                          const SubsetPlan& plan, const SubnetParams& xi0);

struct PathSample {
  double t = 0.0;
  std::size_t segment = 0;
  double loss = 0.0;
  double error = 0.0;
};

struct PathReport {
  std::vector<PathSample> samples;
  double max_loss = 0.0;
  std::vector<double> segment_max;
};

// Loss and error at each segment's endpoints plus samples_per_segment - 1
// equispaced interior points.
PathReport eval_path(const PWLPath& path, const Dataset& data, int samples_per_segment, int jobs = 1);

struct ConnectConfig {
  double drop_ratio = 0.5;
  int trials_a = 20;
  TrainConfig subnet;
  int samples_per_segment = 20;
  int jobs = 1;
  // Emit the empty path when the endpoints are bitwise identical.
  bool shortcut = false;
};

struct ConnectResult {
  PWLPath path;
  BoundReport bound;
  PathReport report;
};

// sparsify(theta0) + bridge + reverse(align) + reverse(sparsify(theta1)).
// xi0 is the anchor-0 subnet with the lower achieved loss of the two
// endpoints.
ConnectResult build_connecting_path(const NetworkArch& arch, const Params& theta0, const Params& theta1,
                                    const Dataset& data, const ConnectConfig& cfg);

}  // namespace mcpath
