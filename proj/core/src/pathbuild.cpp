#include "mcpath/pathbuild.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>

#include "mcpath/parallel.hpp"

namespace mcpath {

namespace {

constexpr std::pair<SegmentKind, const char*> kKindNames[] = {
    {SegmentKind::SwapA, "swap-a"},
    {SegmentKind::SwapB, "swap-b"},
    {SegmentKind::SwapC, "swap-c"},
    {SegmentKind::ZeroIncoming, "zero-incoming"},
    {SegmentKind::SetIncoming, "set-incoming"},
    {SegmentKind::OutputInterp, "output-interp"},
    {SegmentKind::BridgeOutput, "bridge-output"},
};

constexpr const char* kReversePrefix = "reverse-of:";

void require_hidden_layer(const NetworkArch& arch, int layer) {
  if (layer < 1 || layer > arch.depth() - 1) {
    throw std::invalid_argument("layer " + std::to_string(layer) + " is not a hidden layer");
  }
}

void require_neuron(const NetworkArch& arch, int layer, int neuron) {
  if (neuron < 0 || neuron >= arch.width(layer)) {
    throw std::invalid_argument("neuron " + std::to_string(neuron) + " out of range at layer " +
                                std::to_string(layer));
  }
}

bool incoming_zero(const Params& params, int layer, int neuron) {
  return (params.W(layer).col(neuron).array() == 0.0).all() && params.b(layer)(neuron) == 0.0;
}

bool outgoing_zero(const Params& params, int layer, int neuron) {
  return (params.W(layer + 1).row(neuron).array() == 0.0).all();
}

std::string neuron_name(int layer, int neuron) {
  return "neuron " + std::to_string(neuron) + " at layer " + std::to_string(layer);
}

// Runs a builder and tags a precondition failure with the index it would
// have occupied in `path`.
template <typename Build>
void append_checked(PWLPath& path, Build&& build) {
  try {
    path.append(build(path.back()));
  } catch (const PreconditionError& e) {
    throw e.at_segment(static_cast<long>(path.segment_count()));
  }
}

}  // namespace

std::string SegmentLabel::str() const {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return reversed ? std::string(kReversePrefix) + name : std::string(name);
  }
  throw std::logic_error("unknown segment kind");
}

SegmentLabel SegmentLabel::parse(const std::string& text) {
  SegmentLabel label;
  std::string body = text;
  if (body.starts_with(kReversePrefix)) {
    label.reversed = true;
    body = body.substr(std::string(kReversePrefix).size());
  }
  for (const auto& [k, name] : kKindNames) {
    if (body == name) {
      label.kind = k;
      return label;
    }
  }
  throw std::invalid_argument("unknown segment label '" + text + "'");
}

bool SegmentLabel::output_invariant() const noexcept {
  return kind != SegmentKind::OutputInterp && kind != SegmentKind::BridgeOutput;
}

PWLPath PWLPath::starting_at(NetworkArch arch, Params start) {
  start.check_shapes(arch);
  PWLPath path;
  path.arch = std::move(arch);
  path.breakpoints.push_back(std::move(start));
  return path;
}

void PWLPath::push(Params next, SegmentLabel label) {
  next.check_shapes(arch);
  breakpoints.push_back(std::move(next));
  labels.push_back(label);
}

void PWLPath::append(const PWLPath& tail) {
  if (!(tail.arch == arch)) throw std::invalid_argument("appending a path with a different architecture");
  if (!tail.front().identical(back())) {
    throw std::invalid_argument("appended path does not start where this path ends");
  }
  breakpoints.insert(breakpoints.end(), tail.breakpoints.begin() + 1, tail.breakpoints.end());
  labels.insert(labels.end(), tail.labels.begin(), tail.labels.end());
}

PWLPath PWLPath::reversed() const {
  PWLPath out;
  out.arch = arch;
  out.breakpoints.assign(breakpoints.rbegin(), breakpoints.rend());
  out.labels.reserve(labels.size());
  for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
    out.labels.push_back({it->kind, !it->reversed});
  }
  return out;
}

Params PWLPath::at(std::size_t segment, double lambda) const {
  if (segment >= segment_count()) throw std::out_of_range("segment index out of range");
  return Params::lerp(breakpoints[segment], breakpoints[segment + 1], lambda);
}

Params PWLPath::at(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("t must lie in [0, 1]");
  const std::size_t count = segment_count();
  if (count == 0) return front();
  if (t == 1.0) return back();
  const double scaled = t * static_cast<double>(count);
  const auto segment = std::min(static_cast<std::size_t>(scaled), count - 1);
  return at(segment, scaled - static_cast<double>(segment));
}

bool is_pure_zero(const NetworkArch& arch, const Params& params, int layer, int neuron) {
  require_hidden_layer(arch, layer);
  require_neuron(arch, layer, neuron);
  return incoming_zero(params, layer, neuron) && outgoing_zero(params, layer, neuron);
}

PWLPath swap_neurons_path(const NetworkArch& arch, const Params& params, int layer, int pure_zero, int other) {
  params.check_shapes(arch);
  require_hidden_layer(arch, layer);
  require_neuron(arch, layer, pure_zero);
  require_neuron(arch, layer, other);
  if (pure_zero == other) throw PreconditionError("swap needs two distinct neurons");
  if (!is_pure_zero(arch, params, layer, pure_zero)) {
    throw PreconditionError("swap target " + neuron_name(layer, pure_zero) + " is not pure zero");
  }

  PWLPath path = PWLPath::starting_at(arch, params);

  Params copied = params;
  copied.W(layer).col(pure_zero) = params.W(layer).col(other);
  copied.b(layer)(pure_zero) = params.b(layer)(other);
  path.push(copied, {SegmentKind::SwapA});

  Params moved = copied;
  moved.W(layer + 1).row(pure_zero) = copied.W(layer + 1).row(other);
  moved.W(layer + 1).row(other).setZero();
  path.push(moved, {SegmentKind::SwapB});

  Params cleared = moved;
  cleared.W(layer).col(other).setZero();
  cleared.b(layer)(other) = 0.0;
  path.push(std::move(cleared), {SegmentKind::SwapC});
  return path;
}

PWLPath zero_out_incoming(const NetworkArch& arch, const Params& params, int layer,
                          const std::vector<int>& neurons) {
  params.check_shapes(arch);
  PWLPath path = PWLPath::starting_at(arch, params);
  if (neurons.empty()) return path;
  require_hidden_layer(arch, layer);
  Params target = params;
  for (int j : neurons) {
    require_neuron(arch, layer, j);
    if (!outgoing_zero(params, layer, j)) {
      throw PreconditionError("zero-incoming: " + neuron_name(layer, j) + " has nonzero outgoing weights");
    }
    target.W(layer).col(j).setZero();
    target.b(layer)(j) = 0.0;
  }
  path.push(std::move(target), {SegmentKind::ZeroIncoming});
  return path;
}

PWLPath set_incoming(const NetworkArch& arch, const Params& params,
                     const std::vector<IncomingAssignment>& assignments) {
  params.check_shapes(arch);
  PWLPath path = PWLPath::starting_at(arch, params);
  if (assignments.empty()) return path;

  std::set<std::pair<int, int>> assigned;
  Params target = params;
  for (const auto& a : assignments) {
    require_hidden_layer(arch, a.layer);
    require_neuron(arch, a.layer, a.neuron);
    if (a.weights.size() != arch.width(a.layer - 1)) {
      throw ShapeError(a.layer, "incoming assignment has length " + std::to_string(a.weights.size()));
    }
    if (!assigned.insert({a.layer, a.neuron}).second) {
      throw std::invalid_argument("duplicate assignment for " + neuron_name(a.layer, a.neuron));
    }
    target.W(a.layer).col(a.neuron) = a.weights;
    target.b(a.layer)(a.neuron) = a.bias;
  }

  // The assigned neurons must not reach the output: no weight from an
  // assigned neuron into an unassigned one, and no output row.
  const int last_hidden = arch.depth() - 1;
  for (const Params* state : std::array<const Params*, 2>{&params, &target}) {
    for (const auto& [layer, neuron] : assigned) {
      const auto row = state->W(layer + 1).row(neuron);
      for (Eigen::Index k = 0; k < row.size(); ++k) {
        if (row(k) == 0.0) continue;
        if (layer == last_hidden || !assigned.contains({layer + 1, static_cast<int>(k)})) {
          throw PreconditionError("set-incoming: " + neuron_name(layer, neuron) +
                                  " feeds an unassigned unit");
        }
      }
    }
  }
  path.push(std::move(target), {SegmentKind::SetIncoming});
  return path;
}

EmbedResult embed(const NetworkArch& arch, const SubnetParams& xi, const SubsetPlan& plan, const Params& host) {
  host.check_shapes(arch);
  if (plan.anchor != 0) throw std::invalid_argument("embed expects an anchor-0 plan");
  plan.validate(arch);
  const int L = arch.depth();
  const int l = xi.anchor();
  if (l < 0 || l > L - 1) throw std::invalid_argument("subnet anchor out of range");
  if (xi.output_layer() != L) throw ShapeError(L, "subnet output layer does not match host depth");

  const auto& widths = xi.widths();
  const auto& in = plan.at(l);
  if (widths.front() != static_cast<int>(in.size())) {
    throw ShapeError(l, "subnet input width " + std::to_string(widths.front()) + " vs |I| = " +
                            std::to_string(in.size()));
  }
  std::vector<std::vector<int>> comp(static_cast<std::size_t>(L));
  for (int p = l + 1; p <= L - 1; ++p) {
    comp[static_cast<std::size_t>(p)] = plan.complement(arch, p);
    const auto& c = comp[static_cast<std::size_t>(p)];
    if (widths[static_cast<std::size_t>(p - l)] != static_cast<int>(c.size())) {
      throw ShapeError(p, "subnet width " + std::to_string(widths[static_cast<std::size_t>(p - l)]) +
                              " vs complement size " + std::to_string(c.size()));
    }
    for (int j : c) {
      if (!is_pure_zero(arch, host, p, j)) {
        throw PreconditionError("embed: complement " + neuron_name(p, j) + " is not pure zero");
      }
    }
  }

  EmbedResult out;
  out.params = host;
  for (int p = l + 1; p <= L - 1; ++p) {
    const auto& source = p == l + 1 ? in : comp[static_cast<std::size_t>(p - 1)];
    const auto& c = comp[static_cast<std::size_t>(p)];
    const Matrix& U = xi.U(p);
    const Vector& v = xi.v(p);
    for (std::size_t j = 0; j < c.size(); ++j) {
      IncomingAssignment a;
      a.layer = p;
      a.neuron = c[j];
      a.weights = Vector::Zero(arch.width(p - 1));
      for (std::size_t k = 0; k < source.size(); ++k) {
        a.weights(source[k]) = U(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
      }
      a.bias = v(static_cast<Eigen::Index>(j));
      out.params.W(p).col(a.neuron) = a.weights;
      out.params.b(p)(a.neuron) = a.bias;
      out.incoming.push_back(std::move(a));
    }
  }

  const auto& top = l == L - 1 ? in : comp[static_cast<std::size_t>(L - 1)];
  const Matrix& UL = xi.U(L);
  out.output_weights = Matrix::Zero(arch.width(L - 1), arch.output_dim());
  for (std::size_t k = 0; k < top.size(); ++k) {
    out.output_weights.row(top[k]) = UL.row(static_cast<Eigen::Index>(k));
  }
  out.params.W(L) = out.output_weights;
  return out;
}

PWLPath output_interp(const NetworkArch& arch, const Params& params, const Matrix& target, SegmentKind kind) {
  params.check_shapes(arch);
  const int L = arch.depth();
  if (target.rows() != params.W(L).rows() || target.cols() != params.W(L).cols()) {
    throw ShapeError(L, "output target has shape " + std::to_string(target.rows()) + "x" +
                            std::to_string(target.cols()));
  }
  PWLPath path = PWLPath::starting_at(arch, params);
  Params next = params;
  next.W(L) = target;
  path.push(std::move(next), {kind});
  return path;
}

SparsifyResult sparsify_path(const NetworkArch& arch, const Params& params, const SubsetPlan& plan,
                             const std::vector<SubnetParams>& subnets) {
  arch.validate();
  params.check_shapes(arch);
  if (plan.anchor != 0) throw std::invalid_argument("sparsify expects an anchor-0 plan");
  plan.validate(arch, true);
  const int L = arch.depth();

  auto subnet_at = [&](int anchor) -> const SubnetParams& {
    for (const auto& xi : subnets) {
      if (xi.anchor() == anchor) return xi;
    }
    throw std::invalid_argument("no subnet anchored at layer " + std::to_string(anchor));
  };

  PWLPath path = PWLPath::starting_at(arch, params);

  // Base case: refit W_L on I_{L-1}, then silence the complement.
  const auto top_comp = plan.complement(arch, L - 1);
  if (!top_comp.empty()) {
    const auto refit = embed(arch, subnet_at(L - 1), plan, path.back());
    append_checked(path, [&](const Params& p) { return output_interp(arch, p, refit.output_weights); });
    append_checked(path, [&](const Params& p) { return zero_out_incoming(arch, p, L - 1, top_comp); });
  }

  for (int l = L - 2; l >= 1; --l) {
    const auto comp_l = plan.complement(arch, l);
    if (comp_l.empty()) continue;

    // Host xi_l on the silent complements above l and hand it the output.
    const auto placed = embed(arch, subnet_at(l), plan, path.back());
    append_checked(path, [&](const Params& p) { return set_incoming(arch, p, placed.incoming); });
    append_checked(path, [&](const Params& p) { return output_interp(arch, p, placed.output_weights); });

    // The I side above l no longer reaches the output; silence it top-down.
    for (int p = L - 1; p >= l + 1; --p) {
      const auto& kept = plan.at(p);
      append_checked(path, [&](const Params& s) { return zero_out_incoming(arch, s, p, kept); });
    }
    append_checked(path, [&](const Params& s) { return zero_out_incoming(arch, s, l, comp_l); });

    // Move xi_l back onto the I positions so the complements are pure zero again.
    for (int p = l + 1; p <= L - 1; ++p) {
      const auto& kept = plan.at(p);
      const auto comp = plan.complement(arch, p);
      for (std::size_t k = 0; k < comp.size(); ++k) {
        append_checked(path, [&](const Params& s) { return swap_neurons_path(arch, s, p, kept[k], comp[k]); });
      }
    }
  }

  SparsifyResult out;
  out.sparse = path.back();
  out.path = std::move(path);
  return out;
}

PWLPath align_subsets(const NetworkArch& arch, const Params& sparse, const SubsetPlan& from, const SubsetPlan& to) {
  sparse.check_shapes(arch);
  if (from.anchor != 0 || to.anchor != 0) throw std::invalid_argument("align expects anchor-0 plans");
  from.validate(arch);
  to.validate(arch);
  const int L = arch.depth();
  for (int p = 1; p <= L - 1; ++p) {
    if (from.cardinality(p) != to.cardinality(p)) {
      throw std::invalid_argument("align: cardinality mismatch at layer " + std::to_string(p));
    }
  }

  PWLPath path = PWLPath::starting_at(arch, sparse);
  for (int p = 1; p <= L - 1; ++p) {
    const auto target = to.complement(arch, p);
    std::vector<char> in_target(static_cast<std::size_t>(arch.width(p)), 0);
    for (int j : target) in_target[static_cast<std::size_t>(j)] = 1;

    std::vector<int> movers;
    std::vector<int> holes;
    for (int j = 0; j < arch.width(p); ++j) {
      const bool zero = is_pure_zero(arch, path.back(), p, j);
      if (in_target[static_cast<std::size_t>(j)] && !zero) movers.push_back(j);
      if (!in_target[static_cast<std::size_t>(j)] && zero) holes.push_back(j);
    }
    if (holes.size() < movers.size()) {
      throw PreconditionError("align: layer " + std::to_string(p) + " has " + std::to_string(movers.size()) +
                              " active neurons to move but only " + std::to_string(holes.size()) +
                              " pure-zero slots");
    }
    for (std::size_t k = 0; k < movers.size(); ++k) {
      append_checked(path, [&](const Params& s) { return swap_neurons_path(arch, s, p, holes[k], movers[k]); });
    }
  }
  return path;
}

PWLPath bridge_sparsified(const NetworkArch& arch, const Params& sparse_a, const Params& sparse_b,
                          const SubsetPlan& plan, const SubnetParams& xi0) {
  sparse_a.check_shapes(arch);
  sparse_b.check_shapes(arch);
  if (xi0.anchor() != 0) throw std::invalid_argument("bridge needs an anchor-0 subnet");
  const int L = arch.depth();
  for (int p = 1; p <= L - 1; ++p) {
    for (int j : plan.complement(arch, p)) {
      if (!is_pure_zero(arch, sparse_a, p, j) || !is_pure_zero(arch, sparse_b, p, j)) {
        throw PreconditionError("bridge: complement " + neuron_name(p, j) + " is not pure zero at both ends");
      }
    }
  }

  PWLPath path = PWLPath::starting_at(arch, sparse_a);

  const auto placed = embed(arch, xi0, plan, sparse_a);
  append_checked(path, [&](const Params& s) { return set_incoming(arch, s, placed.incoming); });
  append_checked(path, [&](const Params& s) {
    return output_interp(arch, s, placed.output_weights, SegmentKind::BridgeOutput);
  });

  std::vector<IncomingAssignment> from_b;
  for (int p = 1; p <= L - 1; ++p) {
    for (int j : plan.at(p)) {
      from_b.push_back({p, j, sparse_b.W(p).col(j), sparse_b.b(p)(j)});
    }
  }
  append_checked(path, [&](const Params& s) { return set_incoming(arch, s, from_b); });
  append_checked(path, [&](const Params& s) {
    return output_interp(arch, s, sparse_b.W(L), SegmentKind::BridgeOutput);
  });

  for (int p = L - 1; p >= 1; --p) {
    const auto comp = plan.complement(arch, p);
    append_checked(path, [&](const Params& s) { return zero_out_incoming(arch, s, p, comp); });
  }

  // Every coefficient now equals sparse_b numerically; adopt its exact bits
  // (signed zeros included) so the endpoint is bitwise identical.
  Params& last = path.breakpoints.back();
  for (std::size_t i = 0; i < last.weights.size(); ++i) {
    if (last.weights[i] != sparse_b.weights[i]) throw std::logic_error("bridge did not terminate at sparse_b");
  }
  for (std::size_t i = 0; i < last.biases.size(); ++i) {
    if (last.biases[i] != sparse_b.biases[i]) throw std::logic_error("bridge did not terminate at sparse_b");
  }
  last = sparse_b;
  return path;
}

PathReport eval_path(const PWLPath& path, const Dataset& data, int samples_per_segment, int jobs) {
  if (samples_per_segment < 1) throw std::invalid_argument("samples_per_segment must be >= 1");
  const std::size_t segments = path.segment_count();
  const auto per = static_cast<std::size_t>(samples_per_segment);
  const double total = static_cast<double>(std::max<std::size_t>(segments, 1));

  struct Point {
    std::size_t segment;
    std::size_t step;  // lambda = step / per; step == per only for the final endpoint
  };
  std::vector<Point> points;
  points.reserve(segments * per + 1);
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t j = 0; j < per; ++j) points.push_back({s, j});
  }
  points.push_back({segments == 0 ? 0 : segments - 1, segments == 0 ? 0 : per});

  PathReport report;
  report.samples.resize(points.size());
  parallel_for(points.size(), jobs, [&](std::size_t i) {
    const auto [s, j] = points[i];
    const double lambda = static_cast<double>(j) / static_cast<double>(per);
    const Params theta = segments == 0 ? path.front() : j == 0 ? path.breakpoints[s]
                                      : j == per          ? path.breakpoints[s + 1]
                                                          : path.at(s, lambda);
    const Matrix out = forward_batch(path.arch, theta, data.inputs, path.arch.depth());
    auto& sample = report.samples[i];
    sample.segment = s;
    sample.t = segments == 0 ? 0.0 : (static_cast<double>(s) + lambda) / total;
    sample.loss = loss_from_outputs(path.arch.loss, out, data.targets);
    sample.error = error_from_outputs(out, data.targets);
  });

  report.max_loss = -std::numeric_limits<double>::infinity();
  for (const auto& s : report.samples) report.max_loss = std::max(report.max_loss, s.loss);
  report.segment_max.assign(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    const auto& sample = report.samples[i];
    if (segments == 0) break;
    auto& slot = report.segment_max[sample.segment];
    slot = std::max(slot, sample.loss);
    // A segment's start is also the end of the previous one.
    if (points[i].step == 0 && sample.segment > 0) {
      auto& prev = report.segment_max[sample.segment - 1];
      prev = std::max(prev, sample.loss);
    }
  }
  return report;
}

ConnectResult build_connecting_path(const NetworkArch& arch, const Params& theta0, const Params& theta1,
                                    const Dataset& data, const ConnectConfig& cfg) {
  arch.validate();
  theta0.check_shapes(arch);
  theta1.check_shapes(arch);
  ConnectResult result;
  result.bound.drop_ratio = cfg.drop_ratio;
  result.bound.trials = cfg.trials_a;

  if (cfg.shortcut && theta0.identical(theta1)) {
    result.bound.endpoints.push_back({average_loss(arch, theta0, data), classification_error(arch, theta0, data), {}});
    result.path = PWLPath::starting_at(arch, theta0);
    result.report = eval_path(result.path, data, cfg.samples_per_segment, cfg.jobs);
    return result;
  }

  const int L = arch.depth();
  std::vector<SparsifyResult> sparse;
  std::vector<SubsetPlan> plans;
  for (const Params* theta : {&theta0, &theta1}) {
    auto endpoint = experiment_a(arch, *theta, data, cfg.drop_ratio, cfg.trials_a, cfg.subnet, cfg.jobs);
    std::vector<SubnetParams> subnets;
    for (int l = 1; l <= L - 1; ++l) subnets.push_back(endpoint.layers[static_cast<std::size_t>(l)].xi);
    plans.push_back(endpoint.collection(arch));
    sparse.push_back(sparsify_path(arch, *theta, plans.back(), subnets));
    result.bound.endpoints.push_back(std::move(endpoint));
  }

  const auto& e0 = result.bound.endpoints[0].layers.front();
  const auto& e1 = result.bound.endpoints[1].layers.front();
  const SubnetParams& xi0 = e1.best_loss < e0.best_loss ? e1.xi : e0.xi;

  // theta1's sparse point, with its pure zeros moved onto theta0's complements.
  const PWLPath align = align_subsets(arch, sparse[1].sparse, plans[1], plans[0]);

  PWLPath path = sparse[0].path;
  try {
    path.append(bridge_sparsified(arch, sparse[0].sparse, align.back(), plans[0], xi0));
  } catch (const PreconditionError& e) {
    throw e.at_segment(static_cast<long>(path.segment_count()) + std::max(e.segment_index(), 0L));
  }
  path.append(align.reversed());
  path.append(sparse[1].path.reversed());

  result.report = eval_path(path, data, cfg.samples_per_segment, cfg.jobs);
  result.path = std::move(path);
  return result;
}

}  // namespace mcpath
