#pragma once

// Checkable forms of the assumptions behind the corollaries: generic
// position, distinctness, the over-parameterization count, last-layer refit
// quality, one-vs-rest linear separability and dropout stability.

#include <cstdint>
#include <string>
#include <vector>

#include "mcpath/network.hpp"
#include "mcpath/subnet.hpp"

namespace mcpath {

enum class Verdict { Pass, Fail, Inconclusive };

std::string to_string(Verdict v);

struct AssumptionVerdict {
  std::string name;
  Verdict verdict = Verdict::Inconclusive;
  std::string detail;  // witness or counterexample, human readable
  double margin = 0.0;  // signed slack; >= 0 when satisfied
};

struct ConditionReport {
  std::string condition;
  std::vector<AssumptionVerdict> assumptions;

  // Fail if any assumption fails, else Inconclusive if any is, else Pass.
  Verdict overall() const;
};

struct GenericPositionResult {
  Verdict verdict = Verdict::Pass;
  bool exhaustive = true;  // false: Monte Carlo, a pass means "no violation found"
  long subsets_checked = 0;
  std::vector<int> violation;  // indices of a degenerate (d+1)-subset
  double min_ratio = 0.0;       // smallest |det| / prod(row norms) seen

  std::string describe() const;
};

// Every (d+1)-subset of rows, homogenized with a trailing 1, must have
// |det| > 1e-9 * product of row norms. Exhaustive when C(N, d+1) <= exact_limit,
// otherwise `samples` random subsets drawn from `seed`.
GenericPositionResult check_generic_position(const Matrix& points, long exact_limit = 20000,
                                             long samples = 20000, std::uint64_t seed = 0);

struct DistinctResult {
  Verdict verdict = Verdict::Pass;
  int first = -1;   // closest pair (first < second), -1 when N < 2
  int second = -1;
  double distance = 0.0;  // their L-infinity distance
};

// Pass iff every pair of rows is more than `tol` apart in L-infinity.
DistinctResult check_distinct(const Matrix& points, double tol = 1e-9);

struct A1Result {
  Verdict verdict = Verdict::Fail;
  bool half_clause = false;  // 2 |I_{L-1}| >= n_{L-1}
  std::int64_t product = 0;  // 4 floor(n_{L-2}/8) floor((n_{L-1} - |I_{L-1}|) / (4 n_L))
  std::int64_t samples = 0;
};

// Integer-only check of the two-layer over-parameterization count.
A1Result check_A1(std::int64_t n_lm2, std::int64_t n_lm1, std::int64_t n_out, std::int64_t keep_size,
                  std::int64_t samples);
A1Result check_A1(const NetworkArch& arch, int keep_size, std::int64_t samples);

struct RefitResult {
  Matrix weights;  // |kept| x n_L
  double loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;  // gradient norm reached the tolerance
};

// Minimizes the mean loss of W^T z over W by accelerated full-batch gradient
// descent (step 1 / Lipschitz bound, restart on increase) from `init` or zero.
// Returns the best iterate seen.
RefitResult refit_last_layer(LossKind loss, const Matrix& features, const Matrix& targets,
                             const Matrix* init = nullptr, int max_iterations = 20000,
                             double grad_tol = 1e-7);

struct A1bResult {
  Verdict verdict = Verdict::Inconclusive;
  double refit_loss = 0.0;
  double reference_loss = 0.0;  // Phi(theta)
  RefitResult refit;
};

// Refit on f_{L-1, kept}(theta, x), warm-started from the kept rows of W_L.
// Pass when refit <= Phi + epsilon, Fail when converged above it,
// Inconclusive when the iteration cap stops it above it.
A1bResult check_A1b(const NetworkArch& arch, const Params& params, const Dataset& data,
                    const std::vector<int>& kept, double epsilon, int max_iterations = 20000);

struct SeparabilityResult {
  // Pass, or Inconclusive for "not separated within budget".
  Verdict verdict = Verdict::Inconclusive;
  Matrix witness;  // (d + 1) x c: column k is class k's hyperplane, last row the bias
  long epochs = 0;  // largest epoch count used by any class
  std::vector<int> class_errors;
};

// One-vs-rest perceptron per class. max_epochs <= 0 means 10 N c.
SeparabilityResult check_linear_separability(const Matrix& features, const Matrix& labels, long max_epochs = 0);

// True iff for every sample and class, sign(w_k . x + b_k) is + exactly for
// the labelled class.
bool verify_separator(const Matrix& features, const Matrix& labels, const Matrix& witness);

// Corollary 3 (ReLU, L >= 3). `plan` is anchored at 0.
ConditionReport check_corollary3(const NetworkArch& arch, const Params& params, const Dataset& data,
                                 const SubsetPlan& plan, double epsilon, std::uint64_t seed = 0);

// Subsets meeting Corollary 3's cardinalities: I_{L-1} of size ceil(n/2)
// with the lowest refit loss, I_{L-2} of size ceil(n/2) in generic position,
// I_l = all but one neuron with distinct features. Tries `attempts`
// candidates per layer (leading subset first).
SubsetPlan search_corollary3_plan(const NetworkArch& arch, const Params& params, const Dataset& data,
                                  int attempts, std::uint64_t seed);

// Corollary 4 (cross-entropy, one-hot labels). `plan` is anchored at 0.
ConditionReport check_corollary4(const NetworkArch& arch, const Params& params, const Dataset& data,
                                 const SubsetPlan& plan, long max_epochs = 0);

// Subsets of size max(ceil(n_l / 2), n_l - n_L) whose features separate,
// trying `attempts` candidates per layer.
SubsetPlan search_corollary4_plan(const NetworkArch& arch, const Params& params, const Dataset& data,
                                  int attempts, std::uint64_t seed, long max_epochs = 0);

// epsilon-dropout stability via Experiment B: for each hidden l the best
// rescaled dropout loss over `trials` must be <= Phi + epsilon.
ConditionReport check_dropout_stable(const NetworkArch& arch, const Params& params, const Dataset& data,
                                     double epsilon, int trials, double drop_ratio = 0.5,
                                     std::uint64_t seed = 0, int jobs = 1);

}  // namespace mcpath
