#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "autohr/checkpoint.hpp"
#include "autohr/network.hpp"
#include "autohr/optim.hpp"

using namespace autohr;

namespace {

Tensor random_input(int n, int t, int h, int w, Rng& rng) {
  Tensor x(n, 3, t, h, w);
  for (size_t i = 0; i < x.size(); ++i) x[i] = 0.5 + 0.1 * rng.normal();
  return x;
}

double signal_sum_sq(const std::vector<std::vector<double>>& sig) {
  double s = 0.0;
  for (const auto& row : sig)
    for (double v : row) s += v * v;
  return s;
}

std::vector<std::vector<double>> two_sig(const std::vector<std::vector<double>>& sig) {
  auto g = sig;
  for (auto& row : g)
    for (double& v : row) v *= 2.0;
  return g;
}

void zero_all(const std::vector<ParamView>& views) {
  for (const auto& v : views) std::fill(v.grad, v.grad + v.count, 0.0);
}

std::vector<DiscreteCell> preset_cells() {
  return genotype_from_text(preset_genotype("autohr_v1"));
}

}  // namespace

TEST(NetworkConfig, DivisorsFollowPoolSchedule) {
  NetworkConfig cfg;
  EXPECT_EQ(cfg.num_pools(), 3);
  EXPECT_EQ(cfg.temporal_divisor(), 4);
  EXPECT_EQ(cfg.spatial_divisor(), 8);
  NetworkConfig small;
  small.num_blocks = 1;
  EXPECT_EQ(small.num_pools(), 0);
  EXPECT_EQ(small.temporal_divisor(), 1);
  EXPECT_EQ(small.spatial_divisor(), 1);
  NetworkConfig two;
  two.num_blocks = 2;
  EXPECT_EQ(two.num_pools(), 1);
  EXPECT_EQ(two.temporal_divisor(), 1);
  EXPECT_EQ(two.spatial_divisor(), 2);
}

TEST(Network, OutputSignalHasOneSamplePerFrame) {
  NetworkConfig cfg;
  cfg.channels = 4;
  Rng rng(42);
  Network net(cfg, preset_cells(), rng);
  Tensor x = random_input(2, 8, 8, 8, rng);
  auto sig = net.forward(x, true);
  ASSERT_EQ(sig.size(), 2u);
  EXPECT_EQ(sig[0].size(), 8u);
  EXPECT_EQ(sig[1].size(), 8u);
  for (const auto& row : sig)
    for (double v : row) EXPECT_TRUE(std::isfinite(v));
}

TEST(Network, RejectsBadInputGeometryNamingTheDimension) {
  NetworkConfig cfg;
  cfg.channels = 2;
  Rng rng(1);
  Network net(cfg, preset_cells(), rng);
  Rng xr(2);
  try {
    Tensor x = random_input(1, 6, 8, 8, xr);
    net.forward(x, true);
    FAIL() << "expected frame-count rejection";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("frame count"), std::string::npos);
  }
  try {
    Tensor x = random_input(1, 8, 12, 8, xr);
    net.forward(x, true);
    FAIL() << "expected height rejection";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
  }
  try {
    Tensor x = random_input(1, 8, 8, 12, xr);
    net.forward(x, true);
    FAIL() << "expected width rejection";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
  Tensor bad_c(1, 2, 8, 8, 8);
  EXPECT_THROW(net.forward(bad_c, true), ShapeError);
}

TEST(Network, ParamCountMatchesClosedForm) {
  // stem 76C, cells 8(60C^2+8C), projections 8(3C^2+C), head C+1
  for (int c : {2, 4, 8}) {
    NetworkConfig cfg;
    cfg.channels = c;
    Rng rng(7);
    Network net(cfg, preset_cells(), rng);
    std::vector<ParamView> params, buffers;
    net.collect_params(&params);
    net.collect_buffers(&buffers);
    const size_t expected = size_t(504 * c * c + 149 * c + 1);
    EXPECT_EQ(total_param_count(params), expected) << "channels " << c;
    // 8 cells x 4 normalized ops x (run_mean, run_var)
    EXPECT_EQ(buffers.size(), 64u);
    EXPECT_EQ(total_param_count(buffers), size_t(64 * c));
    std::set<std::string> names;
    for (const auto& p : params) EXPECT_TRUE(names.insert(p.name).second);
    for (const auto& b : buffers) EXPECT_TRUE(names.insert(b.name).second);
  }
}

TEST(Network, GradientMatchesFiniteDifferenceThroughFullStack) {
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_blocks = 1;
  Rng rng(11);
  Network net(cfg, preset_cells(), rng);
  Rng xr(12);
  Tensor x = random_input(1, 4, 4, 4, xr);

  std::vector<ParamView> params;
  net.collect_params(&params);
  auto sig = net.forward(x, true);
  zero_all(params);
  net.backward(two_sig(sig));

  // stem weight, a cell weight, head bias
  const double h = 1e-4;
  for (size_t vi : {size_t(0), size_t(5), params.size() - 1}) {
    ParamView& v = params[vi];
    const size_t k = v.count / 2;
    const double saved = v.value[k];
    v.value[k] = saved + h;
    const double up = signal_sum_sq(net.forward(x, true));
    v.value[k] = saved - h;
    const double dn = signal_sum_sq(net.forward(x, true));
    v.value[k] = saved;
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(v.grad[k], fd, 1e-3 * std::max(1.0, std::abs(fd))) << v.name;
  }
}

TEST(Supernet, ForwardBackwardPopulatesWeightAndArchGradients) {
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_blocks = 1;
  Rng rng(21);
  Supernet net(cfg, rng);
  Rng ar(3);
  for (double& a : net.arch.alpha) a = 0.2 * ar.normal();
  Rng xr(22);
  Tensor x = random_input(1, 4, 4, 4, xr);
  auto sig = net.forward(x, true);
  ASSERT_EQ(sig[0].size(), 4u);

  std::vector<ParamView> params, arch;
  net.collect_params(&params);
  net.collect_arch(&arch);
  zero_all(params);
  net.arch.zero_grad();
  net.backward(two_sig(sig));

  double pmax = 0.0;
  for (const auto& p : params)
    for (size_t i = 0; i < p.count; ++i) pmax = std::max(pmax, std::abs(p.grad[i]));
  EXPECT_GT(pmax, 0.0);
  double amax = 0.0;
  for (double g : net.arch.galpha) amax = std::max(amax, std::abs(g));
  EXPECT_GT(amax, 0.0);
}

TEST(Supernet, AlphaGradientMatchesFiniteDifferenceThroughFullStack) {
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_blocks = 1;
  Rng rng(31);
  Supernet net(cfg, rng);
  Rng ar(5);
  for (double& a : net.arch.alpha) a = 0.2 * ar.normal();
  Rng xr(32);
  Tensor x = random_input(1, 4, 4, 4, xr);

  auto sig = net.forward(x, true);
  net.arch.zero_grad();
  net.backward(two_sig(sig));
  const std::vector<double> ga = net.arch.galpha;

  const double h = 1e-4;
  for (size_t i : {size_t(1), size_t(20), size_t(47)}) {
    const double saved = net.arch.alpha[i];
    net.arch.alpha[i] = saved + h;
    const double up = signal_sum_sq(net.forward(x, true));
    net.arch.alpha[i] = saved - h;
    const double dn = signal_sum_sq(net.forward(x, true));
    net.arch.alpha[i] = saved;
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(ga[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "alpha " << i;
  }
}

TEST(Supernet, VariedModeOwnsOneArchSetPerBlock) {
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_blocks = 2;
  cfg.shared_arch = false;
  Rng rng(41);
  Supernet net(cfg, rng);
  EXPECT_EQ(net.arch.num_sets, 2);
  EXPECT_EQ(net.set_for_block(0), 0);
  EXPECT_EQ(net.set_for_block(1), 1);
  EXPECT_EQ(net.derive().size(), 2u);
  NetworkConfig shared = cfg;
  shared.shared_arch = true;
  Rng rng2(41);
  Supernet snet(shared, rng2);
  EXPECT_EQ(snet.arch.num_sets, 1);
  EXPECT_EQ(snet.derive().size(), 1u);
}

TEST(Supernet, PartialChannelForwardKeepsContract) {
  NetworkConfig cfg;
  cfg.channels = 4;
  cfg.num_blocks = 1;
  cfg.pc_ratio = 0.5;
  cfg.edge_norm = true;
  Rng rng(51);
  Supernet net(cfg, rng);
  Rng xr(52);
  Tensor x = random_input(2, 4, 4, 4, xr);
  auto sig = net.forward(x, true);
  ASSERT_EQ(sig.size(), 2u);
  EXPECT_EQ(sig[0].size(), 4u);
  net.backward(two_sig(sig));
}

TEST(Network, GenotypeArityMustMatchBlocks) {
  NetworkConfig cfg;
  cfg.channels = 2;
  Rng rng(61);
  auto one = preset_cells();
  std::vector<DiscreteCell> three = {one[0], one[0], one[0]};
  EXPECT_THROW(Network(cfg, three, rng), ValueError);
  std::vector<DiscreteCell> four = {one[0], one[0], one[0], one[0]};
  Rng rng2(61);
  EXPECT_NO_THROW(Network(cfg, four, rng2));
  Rng rng3(61);
  EXPECT_THROW(Network(cfg, {}, rng3), ValueError);
}

TEST(Checkpoint, RoundTripRestoresEveryArrayBitExact) {
  const std::string dir = "/tmp/autohr_ckpt_test";
  std::filesystem::remove_all(dir);
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_blocks = 1;
  Rng rng(71);
  Network net(cfg, preset_cells(), rng);
  std::vector<ParamView> views;
  net.collect_params(&views);
  net.collect_buffers(&views);
  const std::string geno = genotype_to_text(net.genotype());
  save_checkpoint(dir, views, &geno);

  Rng rng2(999);  // different weights
  Network other(cfg, preset_cells(), rng2);
  std::vector<ParamView> oviews;
  other.collect_params(&oviews);
  other.collect_buffers(&oviews);
  load_checkpoint_values(dir, oviews);
  for (size_t i = 0; i < views.size(); ++i) {
    ASSERT_EQ(views[i].name, oviews[i].name);
    for (size_t k = 0; k < views[i].count; ++k) {
      ASSERT_EQ(views[i].value[k], oviews[i].value[k]) << views[i].name;
    }
  }
  EXPECT_EQ(load_checkpoint_genotype(dir), geno);
  EXPECT_TRUE(checkpoint_has_genotype(dir));
  EXPECT_TRUE(checkpoint_has_array(dir, "stem.w"));
  EXPECT_FALSE(checkpoint_has_array(dir, "arch.alpha"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, OptimizerStateSurvivesRoundTrip) {
  const std::string dir = "/tmp/autohr_ckpt_opt";
  std::filesystem::remove_all(dir);
  std::vector<double> w = {1.0, 2.0};
  std::vector<double> g = {0.5, -0.5};
  Adam opt({{"w", w.data(), g.data(), 2}}, 0.1, 0.0);
  opt.step();
  std::vector<ParamView> views = {{"w", w.data(), g.data(), 2}};
  opt.collect_state("adam", &views);
  save_checkpoint(dir, views, nullptr);

  std::vector<double> w2 = {0.0, 0.0};
  std::vector<double> g2 = {0.0, 0.0};
  Adam opt2({{"w", w2.data(), g2.data(), 2}}, 0.1, 0.0);
  std::vector<ParamView> views2 = {{"w", w2.data(), g2.data(), 2}};
  opt2.collect_state("adam", &views2);
  load_checkpoint_values(dir, views2);
  EXPECT_EQ(w2[0], w[0]);
  EXPECT_EQ(w2[1], w[1]);
  EXPECT_EQ(opt2.step_count(), 1.0);
  EXPECT_FALSE(checkpoint_has_genotype(dir));

  // further steps after restore match a never-interrupted run
  g[0] = g2[0] = 0.3;
  g[1] = g2[1] = 0.7;
  opt.step();
  opt2.step();
  EXPECT_EQ(w[0], w2[0]);
  EXPECT_EQ(w[1], w2[1]);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingOrMismatchedArraysAreErrors) {
  const std::string dir = "/tmp/autohr_ckpt_bad";
  std::filesystem::remove_all(dir);
  std::vector<double> a = {1.0, 2.0};
  std::vector<double> ga = {0.0, 0.0};
  save_checkpoint(dir, {{"a", a.data(), ga.data(), 2}}, nullptr);

  std::vector<double> b = {0.0};
  EXPECT_THROW(load_checkpoint_values(dir, {{"missing", b.data(), nullptr, 1}}), IoError);
  EXPECT_THROW(load_checkpoint_values(dir, {{"a", b.data(), nullptr, 1}}), IoError);
  EXPECT_THROW(load_checkpoint_genotype(dir), IoError);
  EXPECT_THROW(read_manifest("/tmp/does_not_exist_ckpt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, SupernetArchParamsRoundTrip) {
  const std::string dir = "/tmp/autohr_ckpt_arch";
  std::filesystem::remove_all(dir);
  NetworkConfig cfg;
  cfg.channels = 2;
  cfg.num_blocks = 1;
  Rng rng(81);
  Supernet net(cfg, rng);
  Rng ar(8);
  for (double& v : net.arch.alpha) v = ar.normal();
  std::vector<ParamView> views;
  net.collect_params(&views);
  net.collect_arch(&views);
  net.collect_buffers(&views);
  save_checkpoint(dir, views, nullptr);

  Rng rng2(82);
  Supernet other(cfg, rng2);
  std::vector<ParamView> oviews;
  other.collect_params(&oviews);
  other.collect_arch(&oviews);
  other.collect_buffers(&oviews);
  load_checkpoint_values(dir, oviews);
  EXPECT_EQ(other.arch.alpha, net.arch.alpha);
  EXPECT_TRUE(checkpoint_has_array(dir, "arch.alpha"));
  std::filesystem::remove_all(dir);
}
