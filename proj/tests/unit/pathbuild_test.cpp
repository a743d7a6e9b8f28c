#include <gtest/gtest.h>

#include <algorithm>

#include "mcpath/pathbuild.hpp"
#include "oracles.hpp"

using namespace mcpath;
using namespace mcpath::testing;

namespace {

NetworkArch make_arch(std::vector<int> widths, Activation act = Activation::ReLU) {
  NetworkArch a;
  a.widths = std::move(widths);
  a.activation = act;
  return a;
}

double rel_output_change(const NetworkArch& arch, const Params& a, const Params& b, const Matrix& x) {
  const Matrix fa = forward_batch(arch, a, x, arch.depth());
  const Matrix fb = forward_batch(arch, b, x, arch.depth());
  return (fa - fb).cwiseAbs().maxCoeff() / std::max(1.0, fa.cwiseAbs().maxCoeff());
}

// Max relative output change over breakpoints and interior samples of every
// output-invariant segment.
double max_invariant_drift(const PWLPath& path, const Matrix& x) {
  double worst = 0.0;
  for (std::size_t s = 0; s < path.segment_count(); ++s) {
    if (!path.labels[s].output_invariant()) continue;
    for (double lam : {0.0, 0.1, 0.37, 0.5, 0.81, 1.0}) {
      worst = std::max(worst, rel_output_change(path.arch, path.breakpoints[s], path.at(s, lam), x));
    }
  }
  return worst;
}

// Anchor-0 plan keeping the even-indexed neurons (at least half of each layer).
SubsetPlan even_plan(const NetworkArch& arch) {
  SubsetPlan plan;
  std::vector<int> all(static_cast<std::size_t>(arch.input_dim()));
  for (int i = 0; i < arch.input_dim(); ++i) all[static_cast<std::size_t>(i)] = i;
  plan.kept.push_back(all);
  for (int p = 1; p < arch.depth(); ++p) {
    std::vector<int> k;
    for (int j = 0; j < arch.width(p); j += 2) k.push_back(j);
    plan.kept.push_back(k);
  }
  return plan;
}

std::vector<SubnetParams> random_subnets(const NetworkArch& arch, const SubsetPlan& plan, std::uint64_t seed) {
  std::vector<SubnetParams> out;
  for (int l = 0; l < arch.depth(); ++l) {
    std::vector<int> cards;
    for (int p = l; p < arch.depth(); ++p) cards.push_back(plan.cardinality(p));
    const auto widths = subnet_widths(arch, l, cards);
    const NetworkArch sa = arch.with_widths(widths);
    out.push_back(SubnetParams::from_standalone(l, sa, random_params(sa, seed + static_cast<std::uint64_t>(l))));
  }
  return out;
}

double subnet_loss(const NetworkArch& arch, const Params& host, const SubsetPlan& plan, const SubnetParams& xi,
                   const Dataset& d) {
  const Dataset f = extract_features(arch, host, d, xi.anchor(), plan.at(xi.anchor()));
  return loss_from_outputs(arch.loss, subnet_forward_batch(arch, xi, f.inputs), d.targets);
}

}  // namespace

TEST(SegmentLabelTest, RoundTripsAndReverses) {
  for (auto k : {SegmentKind::SwapA, SegmentKind::SwapB, SegmentKind::SwapC, SegmentKind::ZeroIncoming,
                 SegmentKind::SetIncoming, SegmentKind::OutputInterp, SegmentKind::BridgeOutput}) {
    for (bool r : {false, true}) {
      const SegmentLabel label{k, r};
      EXPECT_EQ(SegmentLabel::parse(label.str()), label);
    }
  }
  EXPECT_EQ((SegmentLabel{SegmentKind::SwapB, true}.str()), "reverse-of:swap-b");
  EXPECT_THROW(SegmentLabel::parse("swap-d"), std::invalid_argument);
  EXPECT_FALSE(SegmentLabel{SegmentKind::OutputInterp}.output_invariant());
  EXPECT_TRUE(SegmentLabel{SegmentKind::SwapA}.output_invariant());
}

TEST(PWLPathTest, EvaluatesBreakpointsExactly) {
  const auto arch = make_arch({2, 3, 2});
  PWLPath path = PWLPath::starting_at(arch, random_params(arch, 1));
  path.push(random_params(arch, 2), {SegmentKind::OutputInterp});
  path.push(random_params(arch, 3), {SegmentKind::SwapA});
  EXPECT_TRUE(path.at(0.0).identical(path.breakpoints[0]));
  EXPECT_TRUE(path.at(0.5).identical(path.breakpoints[1]));
  EXPECT_TRUE(path.at(1.0).identical(path.breakpoints[2]));
  EXPECT_THROW(path.at(1.5), std::out_of_range);

  const PWLPath rev = path.reversed();
  EXPECT_TRUE(rev.front().identical(path.back()));
  EXPECT_EQ(rev.labels.front().str(), "reverse-of:swap-a");
  EXPECT_EQ(rev.reversed().labels, path.labels);

  PWLPath other = PWLPath::starting_at(arch, random_params(arch, 9));
  EXPECT_THROW(path.append(other), std::invalid_argument);
  PWLPath tail = PWLPath::starting_at(arch, path.back());
  tail.push(path.front(), {SegmentKind::ZeroIncoming});
  path.append(tail);
  EXPECT_EQ(path.segment_count(), 3u);
}

TEST(SwapPath, KeepsOutputAndMovesTheNeuron) {
  for (auto act : {Activation::ReLU, Activation::LeakyReLU}) {
    const auto arch = make_arch({3, 5, 4, 2}, act);
    Params p = random_params(arch, 5);
    zero_neuron(p, 1, 3);
    const Matrix x = random_matrix(12, 3, 1, 2.0);
    const PWLPath path = swap_neurons_path(arch, p, 1, 3, 1);
    ASSERT_EQ(path.segment_count(), 3u);
    EXPECT_TRUE(path.front().identical(p));
    EXPECT_LE(max_invariant_drift(path, x), 1e-12);
    EXPECT_TRUE(is_pure_zero(arch, path.back(), 1, 1));
    EXPECT_EQ(path.back().W(1).col(3), p.W(1).col(1));
    EXPECT_EQ(path.back().W(2).row(3), p.W(2).row(1));
    EXPECT_EQ(path.back().b(1)(3), p.b(1)(1));
  }
}

TEST(SwapPath, RejectsInvalidRequests) {
  const auto arch = make_arch({3, 5, 2});
  Params p = random_params(arch, 5);
  EXPECT_THROW(swap_neurons_path(arch, p, 1, 2, 1), PreconditionError);
  zero_neuron(p, 1, 2);
  EXPECT_THROW(swap_neurons_path(arch, p, 1, 2, 2), PreconditionError);
  EXPECT_THROW(swap_neurons_path(arch, p, 2, 2, 1), std::invalid_argument);
  EXPECT_NO_THROW(swap_neurons_path(arch, p, 1, 2, 0));
}

TEST(ZeroIncoming, RequiresSilentOutgoing) {
  const auto arch = make_arch({3, 5, 4, 2});
  Params p = random_params(arch, 5);
  EXPECT_THROW(zero_out_incoming(arch, p, 1, {0, 2}), PreconditionError);
  p.W(2).row(0).setZero();
  p.W(2).row(2).setZero();
  const PWLPath path = zero_out_incoming(arch, p, 1, {0, 2});
  ASSERT_EQ(path.segment_count(), 1u);
  EXPECT_LE(max_invariant_drift(path, random_matrix(10, 3, 3)), 1e-12);
  EXPECT_TRUE(is_pure_zero(arch, path.back(), 1, 0));
  EXPECT_TRUE(is_pure_zero(arch, path.back(), 1, 2));
  EXPECT_EQ(zero_out_incoming(arch, p, 1, {}).segment_count(), 0u);
}

TEST(SetIncoming, WritesSilentNeurons) {
  const auto arch = make_arch({3, 5, 4, 2});
  Params p = random_params(arch, 5);
  zero_neuron(p, 1, 1);
  zero_neuron(p, 1, 4);
  // 1 feeds 4 only through layer 2's column of a zeroed neuron.
  IncomingAssignment a{1, 1, random_matrix(3, 1, 8).col(0), 0.3};
  const PWLPath path = set_incoming(arch, p, {a});
  EXPECT_LE(max_invariant_drift(path, random_matrix(10, 3, 3)), 1e-12);
  EXPECT_EQ(path.back().W(1).col(1), a.weights);

  IncomingAssignment loud{1, 0, random_matrix(3, 1, 8).col(0), 0.0};
  EXPECT_THROW(set_incoming(arch, p, {loud}), PreconditionError);
  EXPECT_THROW(set_incoming(arch, p, {a, a}), std::invalid_argument);
  EXPECT_EQ(set_incoming(arch, p, {}).segment_count(), 0u);
}

TEST(Embed, EmbeddedNetworkComputesTheSubnet) {
  const auto arch = make_arch({3, 6, 6, 2});
  const SubsetPlan plan = even_plan(arch);
  Params host = random_params(arch, 2);
  for (int p = 1; p <= 2; ++p) {
    for (int j : plan.complement(arch, p)) zero_neuron(host, p, j);
  }
  const auto subnets = random_subnets(arch, plan, 40);
  const Matrix x = random_matrix(9, 3, 5);
  for (const auto& xi : subnets) {
    const auto e = embed(arch, xi, plan, host);
    const Matrix z = extract_features(arch, host, Dataset{x, Matrix::Zero(9, 2)}, xi.anchor(), plan.at(xi.anchor())).inputs;
    const Matrix want = subnet_forward_batch(arch, xi, z);
    const Matrix got = forward_batch(arch, e.params, x, 3);
    EXPECT_LE((want - got).cwiseAbs().maxCoeff(), 1e-12) << "anchor " << xi.anchor();
  }
  Params busy = random_params(arch, 2);
  EXPECT_THROW(embed(arch, subnets[0], plan, busy), PreconditionError);
}

TEST(OutputInterp, StaysBelowEndpointMaximum) {
  const auto arch = make_arch({3, 6, 2});
  const Params p = random_params(arch, 7);
  const Dataset d = random_dataset(30, 3, 2, 2);
  const PWLPath path = output_interp(arch, p, random_matrix(6, 2, 3, 2.0));
  const auto r = eval_path(path, d, 50);
  const double ends = std::max(r.samples.front().loss, r.samples.back().loss);
  EXPECT_LE(r.max_loss, ends + 1e-12);
  EXPECT_THROW(output_interp(arch, p, Matrix::Zero(5, 2)), ShapeError);
}

TEST(Sparsify, TwoLayerNetworkStructure) {
  const auto arch = make_arch({2, 6, 2});
  const Params p = random_params(arch, 3);
  const SubsetPlan plan = even_plan(arch);
  const auto subnets = random_subnets(arch, plan, 9);
  const auto r = sparsify_path(arch, p, plan, {subnets[1]});
  ASSERT_EQ(r.path.segment_count(), 2u);
  EXPECT_EQ(r.path.labels[0].kind, SegmentKind::OutputInterp);
  EXPECT_EQ(r.path.labels[1].kind, SegmentKind::ZeroIncoming);
  for (int j : plan.complement(arch, 1)) EXPECT_TRUE(is_pure_zero(arch, r.sparse, 1, j));
}

TEST(Sparsify, ComplementsPureZeroAndLossBounded) {
  const auto arch = make_arch({3, 6, 6, 6, 2});
  const Params p = random_params(arch, 3);
  const Dataset d = random_dataset(25, 3, 2, 4);
  const SubsetPlan plan = even_plan(arch);
  const auto subnets = random_subnets(arch, plan, 19);
  const std::vector<SubnetParams> upper(subnets.begin() + 1, subnets.end());
  const auto r = sparsify_path(arch, p, plan, upper);
  EXPECT_TRUE(r.path.front().identical(p));
  for (int l = 1; l <= 3; ++l) {
    for (int j : plan.complement(arch, l)) EXPECT_TRUE(is_pure_zero(arch, r.sparse, l, j));
  }
  double bound = average_loss(arch, p, d);
  for (const auto& xi : upper) bound = std::max(bound, subnet_loss(arch, p, plan, xi, d));
  const auto report = eval_path(r.path, d, 8);
  EXPECT_LE(report.max_loss, bound + 1e-9);
  EXPECT_LE(max_invariant_drift(r.path, d.inputs), 1e-10);
  // The final output is the anchor-1 subnet's.
  EXPECT_NEAR(report.samples.back().loss, subnet_loss(arch, p, plan, upper.front(), d), 1e-10);
}

TEST(Sparsify, MissingSubnetIsRejected) {
  const auto arch = make_arch({3, 6, 6, 2});
  const SubsetPlan plan = even_plan(arch);
  const auto subnets = random_subnets(arch, plan, 1);
  EXPECT_THROW(sparsify_path(arch, random_params(arch, 1), plan, {subnets[2]}), std::invalid_argument);
}

TEST(Align, IdenticalPlansGiveEmptyPath) {
  const auto arch = make_arch({3, 6, 2});
  const SubsetPlan plan = even_plan(arch);
  Params p = random_params(arch, 1);
  for (int j : plan.complement(arch, 1)) zero_neuron(p, 1, j);
  EXPECT_EQ(align_subsets(arch, p, plan, plan).segment_count(), 0u);
}

TEST(Align, SingleExchangeIsOneSwap) {
  const auto arch = make_arch({3, 6, 6, 2});
  const SubsetPlan from = even_plan(arch);
  SubsetPlan to = from;
  to.at(2) = {0, 1, 4};
  Params p = random_params(arch, 1);
  for (int l = 1; l <= 2; ++l) {
    for (int j : from.complement(arch, l)) zero_neuron(p, l, j);
  }
  const Matrix x = random_matrix(10, 3, 2);
  const PWLPath path = align_subsets(arch, p, from, to);
  EXPECT_EQ(path.segment_count(), 3u);
  EXPECT_LE(max_invariant_drift(path, x), 1e-12);
  for (int j : to.complement(arch, 2)) EXPECT_TRUE(is_pure_zero(arch, path.back(), 2, j));
}

TEST(Bridge, EndsBitwiseAtTheSecondPoint) {
  const auto arch = make_arch({3, 6, 6, 2});
  const SubsetPlan plan = even_plan(arch);
  Params a = random_params(arch, 1);
  Params b = random_params(arch, 2);
  for (int l = 1; l <= 2; ++l) {
    for (int j : plan.complement(arch, l)) {
      zero_neuron(a, l, j);
      zero_neuron(b, l, j);
    }
  }
  b.W(1)(0, 0) = -0.0;
  const auto subnets = random_subnets(arch, plan, 5);
  const PWLPath path = bridge_sparsified(arch, a, b, plan, subnets[0]);
  EXPECT_TRUE(path.front().identical(a));
  EXPECT_TRUE(path.back().identical(b));
  EXPECT_TRUE(std::signbit(path.back().W(1)(0, 0)));

  const Dataset d = random_dataset(20, 3, 2, 3);
  const double bound = std::max({average_loss(arch, a, d), average_loss(arch, b, d), subnet_loss(arch, a, plan, subnets[0], d)});
  EXPECT_LE(eval_path(path, d, 10).max_loss, bound + 1e-9);
  EXPECT_THROW(bridge_sparsified(arch, random_params(arch, 3), b, plan, subnets[0]), PreconditionError);
}

TEST(EvalPath, SampleLayoutAndReversal) {
  const auto arch = make_arch({2, 4, 2});
  PWLPath path = PWLPath::starting_at(arch, random_params(arch, 1));
  path.push(random_params(arch, 2), {SegmentKind::OutputInterp});
  path.push(random_params(arch, 3), {SegmentKind::OutputInterp});
  const Dataset d = random_dataset(15, 2, 2, 1);
  const auto r = eval_path(path, d, 5, 2);
  ASSERT_EQ(r.samples.size(), 11u);
  EXPECT_DOUBLE_EQ(r.samples.back().t, 1.0);
  EXPECT_DOUBLE_EQ(r.samples[5].t, 0.5);
  EXPECT_DOUBLE_EQ(r.samples.front().loss, average_loss(arch, path.front(), d));
  EXPECT_DOUBLE_EQ(r.segment_max[0], std::max({r.samples[0].loss, r.samples[1].loss, r.samples[2].loss,
                                               r.samples[3].loss, r.samples[4].loss, r.samples[5].loss}));
  const auto rev = eval_path(path.reversed(), d, 5);
  EXPECT_NEAR(rev.max_loss, r.max_loss, 1e-12);
  // Refining a grid keeps every old sample, so the maximum cannot drop.
  EXPECT_GE(eval_path(path, d, 10).max_loss, r.max_loss);
}

TEST(EvalPath, ConstantPathIsFlat) {
  const auto arch = make_arch({2, 4, 2});
  const Params p = random_params(arch, 1);
  PWLPath path = PWLPath::starting_at(arch, p);
  path.push(p, {SegmentKind::SwapA});
  path.push(p, {SegmentKind::SwapB});
  const Dataset d = random_dataset(15, 2, 2, 1);
  const auto r = eval_path(path, d, 4);
  for (const auto& s : r.samples) EXPECT_EQ(s.loss, r.samples.front().loss);
  const auto empty = eval_path(PWLPath::starting_at(arch, p), d, 4);
  EXPECT_EQ(empty.samples.size(), 1u);
}

TEST(Connect, EndpointsBitwiseAndBounded) {
  const auto arch = make_arch({2, 8, 8, 2});
  Dataset d = random_dataset(40, 2, 2, 6);
  for (int i = 0; i < 40; ++i) d.inputs(i, 0) += d.targets(i, 0) > 0.5 ? 3.0 : -3.0;
  TrainConfig tc;
  tc.max_epochs = 30;
  tc.batch_size = 10;
  const Params t0 = sgd_train(arch, init_params(arch, 1), d, tc).best_params;
  const Params t1 = sgd_train(arch, init_params(arch, 2), d, tc).best_params;
  ConnectConfig cfg;
  cfg.trials_a = 2;
  cfg.subnet = tc;
  cfg.samples_per_segment = 6;
  const auto r = build_connecting_path(arch, t0, t1, d, cfg);
  EXPECT_TRUE(r.path.front().identical(t0));
  EXPECT_TRUE(r.path.back().identical(t1));
  EXPECT_LE(r.report.max_loss, r.bound.rhs() + 1e-9);
  EXPECT_LE(max_invariant_drift(r.path, d.inputs), 1e-9);

  cfg.shortcut = true;
  const auto same = build_connecting_path(arch, t0, t0, d, cfg);
  EXPECT_EQ(same.path.segment_count(), 0u);
  cfg.shortcut = false;
  const auto full = build_connecting_path(arch, t0, t0, d, cfg);
  EXPECT_GT(full.path.segment_count(), 0u);
  EXPECT_TRUE(full.path.back().identical(t0));
}
