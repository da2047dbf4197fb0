#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "autohr/cell.hpp"

using namespace autohr;

namespace {

Tensor random_tensor(int n, int c, int t, int h, int w, Rng& rng) {
  Tensor x(n, c, t, h, w);
  for (size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  return x;
}

double sum_sq(const Tensor& t) {
  double s = 0.0;
  for (size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return s;
}

Tensor two_x(const Tensor& t) {
  Tensor g = Tensor::zeros_like(t);
  g.add_scaled(t, 2.0);
  return g;
}

}  // namespace

TEST(OpSpace, CanonicalOrderAndLookup) {
  const auto& ops = op_space();
  ASSERT_EQ(kNumOps, 9);
  EXPECT_STREQ(ops[0].name, "none");
  EXPECT_STREQ(ops[1].name, "skip_connect");
  EXPECT_STREQ(ops[2].name, "conv_1x3x3");
  EXPECT_STREQ(ops[3].name, "conv_1x5x5");
  EXPECT_STREQ(ops[4].name, "conv_3x1x1");
  EXPECT_STREQ(ops[5].name, "conv_5x1x1");
  EXPECT_STREQ(ops[6].name, "conv_3x3x3");
  EXPECT_STREQ(ops[7].name, "tdc_3x3x3_0.2");
  EXPECT_STREQ(ops[8].name, "tdc_3x3x3_1.0");
  EXPECT_DOUBLE_EQ(ops[7].theta, 0.2);
  EXPECT_DOUBLE_EQ(ops[8].theta, 1.0);
  for (int i = 0; i < kNumOps; ++i) EXPECT_EQ(op_index(ops[size_t(i)].name), i);
  EXPECT_THROW(op_index("conv_7x7x7"), ConfigError);
}

TEST(OpSpace, EdgeListMatchesDag) {
  const auto& e = cell_edges();
  ASSERT_EQ(e.size(), 6u);
  EXPECT_EQ(e[0], (std::pair<int, int>{0, 1}));
  EXPECT_EQ(e[1], (std::pair<int, int>{0, 2}));
  EXPECT_EQ(e[2], (std::pair<int, int>{1, 2}));
  EXPECT_EQ(e[3], (std::pair<int, int>{0, 3}));
  EXPECT_EQ(e[4], (std::pair<int, int>{1, 3}));
  EXPECT_EQ(e[5], (std::pair<int, int>{2, 3}));
  EXPECT_EQ(edges_into(1), (std::vector<int>{0}));
  EXPECT_EQ(edges_into(2), (std::vector<int>{1, 2}));
  EXPECT_EQ(edges_into(3), (std::vector<int>{3, 4, 5}));
}

TEST(Softmax, FrozenValues) {
  // logits (ln 2, 0 x8): exp -> (2, 1 x8), total 10
  double logits[kNumOps] = {std::log(2.0), 0, 0, 0, 0, 0, 0, 0, 0};
  double eta[kNumOps];
  softmax(logits, kNumOps, eta);
  EXPECT_NEAR(eta[0], 0.2, 1e-12);
  for (int i = 1; i < kNumOps; ++i) EXPECT_NEAR(eta[i], 0.1, 1e-12);
}

TEST(Softmax, LargeLogitsStayFinite) {
  double logits[kNumOps] = {40.0, 0, 0, 0, 0, 0, 0, 0, 0};
  double eta[kNumOps];
  softmax(logits, kNumOps, eta);
  double z = 0.0;
  for (int i = 0; i < kNumOps; ++i) {
    EXPECT_TRUE(std::isfinite(eta[i]));
    z += eta[i];
  }
  EXPECT_NEAR(z, 1.0, 1e-12);
  EXPECT_GT(eta[0], 0.999);
}

TEST(Softmax, BackwardMatchesFiniteDifference) {
  Rng rng(11);
  double logits[kNumOps], coef[kNumOps];
  for (int i = 0; i < kNumOps; ++i) {
    logits[i] = rng.normal();
    coef[i] = rng.normal();
  }
  auto f = [&](const double* l) {
    double eta[kNumOps], s = 0.0;
    softmax(l, kNumOps, eta);
    for (int i = 0; i < kNumOps; ++i) s += coef[i] * eta[i];
    return s;
  };
  double eta[kNumOps], grad[kNumOps] = {0};
  softmax(logits, kNumOps, eta);
  softmax_backward(eta, coef, kNumOps, grad);
  const double h = 1e-6;
  for (int i = 0; i < kNumOps; ++i) {
    double pert[kNumOps];
    std::copy(logits, logits + kNumOps, pert);
    pert[i] = logits[i] + h;
    const double up = f(pert);
    pert[i] = logits[i] - h;
    const double dn = f(pert);
    EXPECT_NEAR(grad[i], (up - dn) / (2 * h), 1e-6);
  }
}

TEST(ArchParams, UniformInitHasMaxEntropy) {
  ArchParams arch(4, true);
  EXPECT_EQ(arch.alpha.size(), size_t(4 * 6 * 9));
  EXPECT_EQ(arch.beta.size(), size_t(4 * 6));
  for (double v : arch.alpha) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(arch.mean_edge_entropy(), std::log(9.0), 1e-12);
  arch.alpha[3] = std::nan("");
  EXPECT_THROW(arch.check_finite(), ValueError);
}

TEST(MixedEdge, OneHotSkipIsIdentity) {
  Rng rng(5);
  MixedEdge edge(3, 1.0, rng);
  Tensor x = random_tensor(2, 3, 4, 3, 3, rng);
  double eta[kNumOps] = {0};
  eta[op_index("skip_connect")] = 1.0;
  Tensor y = edge.forward(x, eta, true);
  ASSERT_TRUE(y.same_shape(x));
  for (size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(MixedEdge, OneHotNoneIsZero) {
  Rng rng(6);
  MixedEdge edge(2, 1.0, rng);
  Tensor x = random_tensor(1, 2, 4, 3, 3, rng);
  double eta[kNumOps] = {0};
  eta[0] = 1.0;
  Tensor y = edge.forward(x, eta, true);
  for (size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(MixedEdge, PartialChannelShiftsBypassFirst) {
  Rng rng(7);
  MixedEdge edge(4, 0.5, rng);
  EXPECT_EQ(edge.processed_channels(), 2);
  Tensor x = random_tensor(1, 4, 4, 3, 3, rng);
  double eta[kNumOps] = {0};
  eta[op_index("skip_connect")] = 1.0;
  Tensor y = edge.forward(x, eta, true);
  const size_t plane = 4 * 3 * 3;
  // bypassed channels 2,3 land at output channels 0,1
  for (int c = 0; c < 2; ++c)
    for (size_t i = 0; i < plane; ++i)
      EXPECT_DOUBLE_EQ(y[size_t(c) * plane + i], x[size_t(c + 2) * plane + i]);
  // processed slice (identity here) lands at output channels 2,3
  for (int c = 2; c < 4; ++c)
    for (size_t i = 0; i < plane; ++i)
      EXPECT_DOUBLE_EQ(y[size_t(c) * plane + i], x[size_t(c - 2) * plane + i]);
}

TEST(Cell, AlphaGradientMatchesFiniteDifference) {
  Rng rng(21);
  Cell cell(2, 1.0, rng);
  ArchParams arch(1, false);
  for (double& a : arch.alpha) a = 0.3 * rng.normal();
  Tensor x = random_tensor(1, 2, 4, 3, 3, rng);

  auto loss_of = [&](const ArchParams& a) {
    Rng r(21);  // fresh weights identical to `cell`
    Cell probe(2, 1.0, r);
    return sum_sq(probe.forward(x, a, 0, true));
  };
  // analytic gradient
  Tensor y = cell.forward(x, arch, 0, true);
  arch.zero_grad();
  cell.backward(two_x(y), arch, 0);

  const double h = 1e-3;
  for (size_t i : {size_t(0), size_t(5), size_t(13), size_t(27), size_t(44), size_t(53)}) {
    ArchParams pert = arch;
    pert.alpha[i] = arch.alpha[i] + h;
    const double up = loss_of(pert);
    pert.alpha[i] = arch.alpha[i] - h;
    const double dn = loss_of(pert);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(arch.galpha[i], fd, 1e-3 * std::max(1.0, std::abs(fd)))
        << "alpha index " << i;
  }
}

TEST(Cell, InputGradientMatchesFiniteDifference) {
  Rng rng(22);
  Cell cell(2, 1.0, rng);
  ArchParams arch(1, false);
  Rng arng(3);
  for (double& a : arch.alpha) a = 0.3 * arng.normal();
  Tensor x = random_tensor(1, 2, 4, 3, 3, rng);

  Tensor y = cell.forward(x, arch, 0, true);
  arch.zero_grad();
  Tensor gx = cell.backward(two_x(y), arch, 0);

  auto loss_at = [&](const Tensor& xv) {
    Rng r(22);
    Cell probe(2, 1.0, r);
    return sum_sq(probe.forward(xv, arch, 0, true));
  };
  const double h = 1e-3;
  for (size_t i : {size_t(0), size_t(17), size_t(41), size_t(63)}) {
    Tensor xp = x;
    xp[i] = x[i] + h;
    const double up = loss_at(xp);
    xp[i] = x[i] - h;
    const double dn = loss_at(xp);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(gx[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "input index " << i;
  }
}

TEST(Cell, EdgeNormBetaGradientMatchesFiniteDifference) {
  Rng rng(23);
  Cell cell(2, 1.0, rng);
  ArchParams arch(1, true);
  Rng arng(9);
  for (double& a : arch.alpha) a = 0.3 * arng.normal();
  for (double& b : arch.beta) b = 0.3 * arng.normal();
  Tensor x = random_tensor(1, 2, 4, 3, 3, rng);

  Tensor y = cell.forward(x, arch, 0, true);
  arch.zero_grad();
  cell.backward(two_x(y), arch, 0);

  auto loss_of = [&](const ArchParams& a) {
    Rng r(23);
    Cell probe(2, 1.0, r);
    return sum_sq(probe.forward(x, a, 0, true));
  };
  const double h = 1e-3;
  for (size_t i = 0; i < arch.beta.size(); ++i) {
    ArchParams pert = arch;
    pert.beta[i] = arch.beta[i] + h;
    const double up = loss_of(pert);
    pert.beta[i] = arch.beta[i] - h;
    const double dn = loss_of(pert);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(arch.gbeta[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "beta index " << i;
  }
  // edge 0 is node 1's only incoming edge: its normalized weight is constant 1
  EXPECT_NEAR(arch.gbeta[0], 0.0, 1e-12);
}

TEST(Cell, PartialChannelRatioOneMatchesPlainPath) {
  // ratio 1 must be the plain relaxation bit for bit
  Rng rng_a(31);
  Cell a(2, 1.0, rng_a);
  ArchParams arch(1, false);
  Rng arng(17);
  for (double& v : arch.alpha) v = 0.5 * arng.normal();
  Rng xr(4);
  Tensor x = random_tensor(1, 2, 4, 3, 3, xr);
  Tensor ya = a.forward(x, arch, 0, true);
  Rng rng_b(31);
  Cell b(2, 1.0, rng_b);
  Tensor yb = b.forward(x, arch, 0, true);
  ASSERT_TRUE(ya.same_shape(yb));
  for (size_t i = 0; i < ya.size(); ++i) EXPECT_EQ(ya[i], yb[i]);
}

TEST(Cell, PartialChannelGradientMatchesFiniteDifference) {
  Rng rng(33);
  Cell cell(4, 0.5, rng);
  ArchParams arch(1, false);
  Rng arng(7);
  for (double& a : arch.alpha) a = 0.3 * arng.normal();
  Tensor x = random_tensor(1, 4, 4, 3, 3, rng);

  Tensor y = cell.forward(x, arch, 0, true);
  arch.zero_grad();
  Tensor gx = cell.backward(two_x(y), arch, 0);

  auto loss_alpha = [&](const ArchParams& a) {
    Rng r(33);
    Cell probe(4, 0.5, r);
    return sum_sq(probe.forward(x, a, 0, true));
  };
  const double h = 1e-3;
  for (size_t i : {size_t(2), size_t(19), size_t(40)}) {
    ArchParams pert = arch;
    pert.alpha[i] = arch.alpha[i] + h;
    const double up = loss_alpha(pert);
    pert.alpha[i] = arch.alpha[i] - h;
    const double dn = loss_alpha(pert);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(arch.galpha[i], fd, 1e-3 * std::max(1.0, std::abs(fd)));
  }
  auto loss_x = [&](const Tensor& xv) {
    Rng r(33);
    Cell probe(4, 0.5, r);
    return sum_sq(probe.forward(xv, arch, 0, true));
  };
  for (size_t i : {size_t(1), size_t(50), size_t(100)}) {
    Tensor xp = x;
    xp[i] = x[i] + h;
    const double up = loss_x(xp);
    xp[i] = x[i] - h;
    const double dn = loss_x(xp);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(gx[i], fd, 1e-3 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Derive, UniformAlphaPicksSkipAndLowSources) {
  ArchParams arch(1, false);
  DiscreteCell cell = derive_cell(arch, 0);
  ASSERT_EQ(cell.edges.size(), 5u);
  const int skip = op_index("skip_connect");
  // ties: lowest op index beats every other candidate, lowest sources kept
  EXPECT_EQ(cell.edges[0].node, 1);
  EXPECT_EQ(cell.edges[0].src, 0);
  EXPECT_EQ(cell.edges[0].op, skip);
  EXPECT_EQ(cell.edges[1].node, 2);
  EXPECT_EQ(cell.edges[1].src, 0);
  EXPECT_EQ(cell.edges[2].node, 2);
  EXPECT_EQ(cell.edges[2].src, 1);
  EXPECT_EQ(cell.edges[3].node, 3);
  EXPECT_EQ(cell.edges[3].src, 0);
  EXPECT_EQ(cell.edges[4].node, 3);
  EXPECT_EQ(cell.edges[4].src, 1);
  for (const auto& e : cell.edges) EXPECT_EQ(e.op, skip);
}

TEST(Derive, ArgmaxOpAndStrongestEdgesWin) {
  ArchParams arch(1, false);
  // edge 0: make tdc_3x3x3_1.0 dominate
  arch.alpha_edge(0, 0)[8] = 3.0;
  // node 3 edges: strengths s(4) > s(2) > s(1) on a conv op
  arch.alpha_edge(0, 3)[2] = 4.0;
  arch.alpha_edge(0, 4)[2] = 1.0;
  arch.alpha_edge(0, 5)[2] = 2.0;
  DiscreteCell cell = derive_cell(arch, 0);
  EXPECT_EQ(cell.edges[0].op, op_index("tdc_3x3x3_1.0"));
  // node 3 keeps sources 0 and 2
  EXPECT_EQ(cell.edges[3].node, 3);
  EXPECT_EQ(cell.edges[3].src, 0);
  EXPECT_EQ(cell.edges[4].node, 3);
  EXPECT_EQ(cell.edges[4].src, 2);
  EXPECT_EQ(cell.edges[3].op, op_index("conv_1x3x3"));
  EXPECT_EQ(cell.edges[4].op, op_index("conv_1x3x3"));
}

TEST(Derive, NoneNeverRetainedEvenWhenDominant) {
  ArchParams arch(1, false);
  for (int e = 0; e < kNumEdges; ++e) arch.alpha_edge(0, e)[0] = 10.0;
  DiscreteCell cell = derive_cell(arch, 0);
  for (const auto& e : cell.edges) EXPECT_NE(e.op, 0);
  validate_discrete(cell);
}

TEST(Derive, RandomParamsAlwaysYieldValidCells) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    ArchParams arch(trial % 2 ? 4 : 1, trial % 3 == 0);
    for (double& a : arch.alpha) a = 2.0 * rng.normal();
    auto cells = derive_architecture(arch);
    ASSERT_EQ(int(cells.size()), arch.num_sets);
    for (const auto& c : cells) EXPECT_NO_THROW(validate_discrete(c));
  }
}

TEST(Derive, DeterministicForSameAlpha) {
  Rng rng(123);
  ArchParams arch(4, false);
  for (double& a : arch.alpha) a = rng.normal();
  const std::string g1 = genotype_to_text(derive_architecture(arch));
  const std::string g2 = genotype_to_text(derive_architecture(arch));
  EXPECT_EQ(g1, g2);
}

TEST(Genotype, PresetRoundTripsThroughText) {
  const std::string text = preset_genotype("autohr_v1");
  auto cells = genotype_from_text(text);
  ASSERT_EQ(cells.size(), 1u);
  validate_discrete(cells[0]);
  EXPECT_EQ(genotype_to_text(cells), text);
  EXPECT_THROW(preset_genotype("autohr_v0"), ConfigError);
}

TEST(Genotype, PresetWiring) {
  auto cells = genotype_from_text(preset_genotype("autohr_v1"));
  const auto& e = cells[0].edges;
  ASSERT_EQ(e.size(), 5u);
  EXPECT_EQ(e[0].op, op_index("conv_3x1x1"));
  EXPECT_EQ(e[1].op, op_index("conv_5x1x1"));
  EXPECT_EQ(e[2].op, op_index("tdc_3x3x3_0.2"));
  EXPECT_EQ(e[2].src, 1);
  EXPECT_EQ(e[3].op, op_index("conv_1x5x5"));
  EXPECT_EQ(e[4].op, op_index("skip_connect"));
  EXPECT_EQ(e[4].src, 2);
}

TEST(Genotype, MultiCellRoundTrip) {
  ArchParams arch(4, false);
  Rng rng(55);
  for (double& a : arch.alpha) a = rng.normal();
  auto cells = derive_architecture(arch);
  const std::string text = genotype_to_text(cells);
  EXPECT_NE(text.find("cell 0"), std::string::npos);
  EXPECT_NE(text.find("cell 3"), std::string::npos);
  auto parsed = genotype_from_text(text);
  ASSERT_EQ(parsed.size(), 4u);
  EXPECT_EQ(genotype_to_text(parsed), text);
}

TEST(Genotype, ValidationRejectsBrokenCells) {
  // none op
  DiscreteCell c1;
  c1.edges = {{1, 0, 0}, {2, 0, 1}, {2, 1, 1}, {3, 0, 1}, {3, 1, 1}};
  EXPECT_THROW(validate_discrete(c1), ValueError);
  // node 2 with one edge
  DiscreteCell c2;
  c2.edges = {{1, 0, 1}, {2, 0, 1}, {3, 0, 1}, {3, 1, 1}};
  EXPECT_THROW(validate_discrete(c2), ValueError);
  // duplicate source
  DiscreteCell c3;
  c3.edges = {{1, 0, 1}, {2, 0, 1}, {2, 0, 1}, {3, 0, 1}, {3, 1, 1}};
  EXPECT_THROW(validate_discrete(c3), ValueError);
  // source not earlier than node
  DiscreteCell c4;
  c4.edges = {{1, 1, 1}, {2, 0, 1}, {2, 1, 1}, {3, 0, 1}, {3, 1, 1}};
  EXPECT_THROW(validate_discrete(c4), ValueError);
  EXPECT_THROW(genotype_from_text("node 1 <- warp_drive(node 0)\n"), ConfigError);
  EXPECT_THROW(genotype_from_text(""), ConfigError);
}

TEST(DiscreteModule, AllSkipComputesPrefixSums) {
  // B1 = x, B2 = x + B1 = 2x, B3 = B1 + B2 = 3x
  DiscreteCell geno;
  const int skip = op_index("skip_connect");
  geno.edges = {{1, 0, skip}, {2, 0, skip}, {2, 1, skip}, {3, 1, skip}, {3, 2, skip}};
  Rng rng(8);
  DiscreteCellModule mod(geno, 2, rng);
  Tensor x = random_tensor(1, 2, 4, 3, 3, rng);
  Tensor y = mod.forward(x, true);
  ASSERT_EQ(y.dim(1), 6);
  const size_t plane = 4 * 3 * 3;
  for (int c = 0; c < 2; ++c) {
    for (size_t i = 0; i < plane; ++i) {
      const double v = x[size_t(c) * plane + i];
      EXPECT_DOUBLE_EQ(y[size_t(c) * plane + i], v);
      EXPECT_DOUBLE_EQ(y[size_t(c + 2) * plane + i], 2 * v);
      EXPECT_DOUBLE_EQ(y[size_t(c + 4) * plane + i], 3 * v);
    }
  }
}

TEST(DiscreteModule, PresetGradientMatchesFiniteDifference) {
  auto cells = genotype_from_text(preset_genotype("autohr_v1"));
  Rng rng(77);
  DiscreteCellModule mod(cells[0], 2, rng);
  Tensor x = random_tensor(1, 2, 4, 3, 3, rng);
  Tensor y = mod.forward(x, true);
  EXPECT_EQ(y.dim(1), mod.out_channels());
  Tensor gx = mod.backward(two_x(y));

  auto loss_at = [&](const Tensor& xv) {
    Rng r2(77);
    DiscreteCellModule probe(cells[0], 2, r2);
    return sum_sq(probe.forward(xv, true));
  };
  // small step keeps relu kinks out of the difference window
  const double h = 1e-4;
  for (size_t i : {size_t(0), size_t(23), size_t(47), size_t(70)}) {
    Tensor xp = x;
    xp[i] = x[i] + h;
    const double up = loss_at(xp);
    xp[i] = x[i] - h;
    const double dn = loss_at(xp);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(gx[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "index " << i;
  }
}

TEST(DiscreteModule, ParamCollectionNamesAreUnique) {
  auto cells = genotype_from_text(preset_genotype("autohr_v1"));
  Rng rng(13);
  DiscreteCellModule mod(cells[0], 4, rng);
  std::vector<ParamView> params, buffers;
  mod.collect_params("cell0", &params);
  mod.collect_buffers("cell0", &buffers);
  std::set<std::string> names;
  for (const auto& p : params) {
    EXPECT_TRUE(names.insert(p.name).second) << "duplicate " << p.name;
    EXPECT_NE(p.value, nullptr);
    EXPECT_NE(p.grad, nullptr);
    EXPECT_GT(p.count, 0u);
  }
  for (const auto& b : buffers) {
    EXPECT_TRUE(names.insert(b.name).second) << "duplicate " << b.name;
    EXPECT_EQ(b.grad, nullptr);
  }
  // 4 conv-kind edges with weight+bn.gamma+bn.beta, 1 skip with none
  EXPECT_EQ(params.size(), 12u);
  EXPECT_EQ(buffers.size(), 8u);
}

TEST(SupernetCell, ParamCollectionCoversAllCandidates) {
  Rng rng(14);
  Cell cell(2, 1.0, rng);
  std::vector<ParamView> params;
  cell.collect_params("c", &params);
  // 6 edges x 7 compute candidates x 3 arrays (weight, bn gamma, bn beta)
  EXPECT_EQ(params.size(), size_t(6 * 7 * 3));
  std::set<std::string> names;
  for (const auto& p : params) EXPECT_TRUE(names.insert(p.name).second);
}
