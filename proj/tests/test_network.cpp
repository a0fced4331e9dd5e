#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "dlss/error.hpp"
#include "dlss/models.hpp"
#include "dlss/nn/network.hpp"
#include "dlss/nn/ops.hpp"
#include "dlss/nn/optim.hpp"
#include "helpers.hpp"

using namespace dlss;
using namespace dlss::nn;

namespace {

double top_singular_value(const std::vector<double>& w, int cols) {
  const int rows = static_cast<int>(w.size()) / cols;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = w[static_cast<std::size_t>(i) * cols + j];
  }
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

double stddev(std::span<const float> v) {
  double s = 0, s2 = 0;
  for (float x : v) {
    s += x;
    s2 += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(v.size());
  return std::sqrt(std::max(s2 / n - (s / n) * (s / n), 0.0));
}

NetworkSpec bn_spec() {
  NetworkSpec s;
  s.name = "bn";
  s.inputs = {{1, 4, 4, 2}};
  s.layers = {conv_layer("c", 2, 3, 1, NormKind::weight_norm, false), make_layer(LayerKind::mean_only_bn, "bn")};
  return s;
}

}  // namespace

TEST(SpectralNorm, PowerIterationMatchesSvd) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> w(18 * 4);
    for (double& x : w) x = normal_draw(rng, 0, 1);
    SpectralState st;
    double sigma = 0;
    std::vector<double> out;
    for (int i = 0; i < 200; ++i) out = spectral_normalize(w, 4, st, &sigma);
    const double oracle = top_singular_value(w, 4);
    EXPECT_NEAR(sigma, oracle, 1e-6 * oracle);
    EXPECT_NEAR(top_singular_value(out, 4), 1.0, 1e-6);
  }
}

TEST(SpectralNorm, DiagonalCase) {
  const std::vector<double> w{3, 0, 0, 1};
  SpectralState st;
  st.u = {0.6, 0.8};
  st.v = {0.6, 0.8};
  double sigma = 0;
  std::vector<double> out;
  for (int i = 0; i < 50; ++i) out = spectral_normalize(w, 2, st, &sigma);
  EXPECT_NEAR(sigma, 3.0, 1e-9);
  EXPECT_NEAR(out[0], 1.0, 1e-9);
  EXPECT_NEAR(out[3], 1.0 / 3.0, 1e-9);
}

TEST(SpectralNorm, LayerWeightsBoundedAfterIteration) {
  DiscriminatorSetSpec ds;
  ds.target_side = 32;
  ds.base_channels = 4;
  DiscriminatorSet d(ds);
  std::mt19937_64 rng(2);
  d.initialize(rng);
  for (int i = 0; i < 100; ++i) d.power_iterate();
  for (int m = 0; m < 3; ++m) {
    const auto& net = d.member(m);
    std::map<std::string, std::vector<double>> st;
    for (const auto& a : net.export_state()) st[a.name] = a.values;
    for (const auto& l : net.spec().layers) {
      if (l.norm != NormKind::spectral) continue;
      const auto& w = st.at(l.name + ".w");
      const double sig = top_singular_value(w, l.out_channels);
      const auto& u = st.at(l.name + ".sn_u");
      const auto& v = st.at(l.name + ".sn_v");
      double est = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = 0; j < u.size(); ++j) est += u[j] * w[i * u.size() + j] * v[i];
      }
      EXPECT_NEAR(est / sig, 1.0, 1e-3) << l.name;
    }
  }
}

TEST(WeightNorm, ChannelNormEqualsGain) {
  const auto v = test::random_tensor<double>({3, 3, 2, 4}, 3);
  const auto g = Tensor<double>::from({1, 1, 1, 4}, {0.5, 1, 2, 3}, true);
  const auto w = weight_norm(v, g);
  std::vector<double> n(4, 0.0);
  for (std::size_t k = 0; k < w.numel(); ++k) n[k % 4] += w.value()[k] * w.value()[k];
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(std::sqrt(n[c]), g.value()[c], 1e-12);
}

TEST(Init, DataDependentHitsTargetStd) {
  NetworkSpec s;
  s.name = "dd";
  s.inputs = {{1, 16, 16, 1}};
  s.layers = {conv_layer("c0", 8, 3, 1, NormKind::weight_norm, true), make_layer(LayerKind::relu, "r0"),
              conv_layer("c1", 8, 3, 1, NormKind::weight_norm, true), make_layer(LayerKind::relu, "r1"),
              conv_layer("c2", 8, 3, 2, NormKind::weight_norm, true)};
  Network<float> net(s);
  std::mt19937_64 rng(4);
  net.init_normal(rng, 0.05);
  auto probe = test::random_tensor<float>({4, 16, 16, 1}, 5, -0.8, 0.8, false);
  net.init_data_dependent({probe});
  EXPECT_NEAR(stddev(net.forward({probe}).value()), 1.0, 1e-3);
  auto fresh = test::random_tensor<float>({4, 16, 16, 1}, 6, -0.8, 0.8, false);
  const double sd = stddev(net.forward({fresh}).value());
  EXPECT_GE(sd, 0.5);
  EXPECT_LE(sd, 2.0);
}

TEST(Init, DiscriminatorWeightMoments) {
  DiscriminatorSetSpec ds;
  ds.target_side = 64;
  DiscriminatorSet d(ds);
  std::mt19937_64 rng(7);
  d.initialize(rng);
  double s = 0, s2 = 0, n = 0;
  for (const auto& t : d.trainable()) {
    if (t.shape().numel() == static_cast<std::size_t>(t.shape().c)) continue;  // biases
    for (float x : t.value()) {
      s += x;
      s2 += static_cast<double>(x) * x;
      ++n;
    }
  }
  ASSERT_GT(n, 10000);
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4 * 0.03 / std::sqrt(n));
  EXPECT_NEAR(sd, 0.03, 0.03 * 0.03);
}

TEST(BatchNorm, FrozenStatisticsAreBitIdentical) {
  Network<float> net(bn_spec());
  std::mt19937_64 rng(8);
  net.init_normal(rng, 0.3);
  net.forward({test::random_tensor<float>({2, 4, 4, 2}, 9, 0, 1, false)}, Mode::train);
  net.set_frozen(true);
  const auto before = net.export_state();
  for (int i = 0; i < 1000; ++i) net.forward({test::random_tensor<float>({2, 4, 4, 2}, 100 + i, 0, 1, false)}, Mode::train);
  const auto after = net.export_state();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].values, after[i].values) << before[i].name;
}

TEST(BatchNorm, UnfrozenStatisticsMove) {
  Network<float> net(bn_spec());
  std::mt19937_64 rng(8);
  net.init_normal(rng, 0.3);
  const auto before = net.export_state();
  net.forward({test::random_tensor<float>({2, 4, 4, 2}, 9, 0, 1, false)}, Mode::train);
  EXPECT_NE(before, net.export_state());
  const auto mid = net.export_state();
  net.forward({test::random_tensor<float>({2, 4, 4, 2}, 10, 0, 1, false)});
  EXPECT_EQ(mid, net.export_state());
}

TEST(State, ExportImportRoundTrip) {
  Network<float> a(bn_spec()), b(bn_spec());
  std::mt19937_64 r1(10), r2(11);
  a.init_normal(r1, 0.3);
  b.init_normal(r2, 0.3);
  a.forward({test::random_tensor<float>({2, 4, 4, 2}, 12, 0, 1, false)}, Mode::train);
  b.import_state(a.export_state());
  const auto x = test::random_tensor<float>({1, 4, 4, 2}, 13, 0, 1, false);
  const auto ya = a.forward({x});
  const auto yb = b.forward({x});
  EXPECT_TRUE(std::equal(ya.value().begin(), ya.value().end(), yb.value().begin()));
  auto st = a.export_state();
  st.pop_back();
  EXPECT_THROW(b.import_state(st), InvalidInput);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = Tensor<double>::from({1, 1, 1, 2}, {1.0, -1.0}, true);
  Adam<double> opt({p});
  p.zero_grad();
  p.grad()[0] = 2.0;
  p.grad()[1] = -0.01;
  opt.step(0.1, 0.9);
  EXPECT_NEAR(p.value()[0], 0.9, 1e-6);
  EXPECT_NEAR(p.value()[1], -0.9, 1e-4);
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, BiasCorrectionUsesAppliedBetas) {
  // Constant gradient: the corrected first moment equals the gradient for any
  // beta1 sequence, so every step moves by lr.
  auto p = Tensor<double>::from({1, 1, 1, 1}, {0.0}, true);
  Adam<double> opt({p});
  const double betas[] = {0.9, 0.9, 0.5, 0.7, 0.5};
  for (double b : betas) {
    p.zero_grad();
    p.grad()[0] = 3.0;
    opt.step(0.01, b);
  }
  EXPECT_NEAR(p.value()[0], -0.05, 1e-9);
}

TEST(Adam, MinimizesQuadratic) {
  auto p = test::random_tensor<double>({1, 1, 1, 4}, 14);
  Adam<double> opt({p});
  for (int i = 0; i < 2000; ++i) {
    backward(mse_to_value(p, 0.5));
    opt.step(0.01, 0.9);
  }
  for (double v : p.value()) EXPECT_NEAR(v, 0.5, 1e-3);
}

TEST(Adam, StateRoundTrip) {
  auto p = test::random_tensor<double>({1, 1, 1, 3}, 15);
  Adam<double> a({p});
  backward(mse_to_value(p, 0.0));
  a.step(0.01, 0.9);
  auto q = Tensor<double>::from(p.shape(), {p.value().begin(), p.value().end()}, true);
  Adam<double> b({q});
  b.import_state(a.export_state("opt/"), "opt/");
  backward(mse_to_value(p, 0.0));
  backward(mse_to_value(q, 0.0));
  a.step(0.01, 0.9);
  b.step(0.01, 0.9);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p.value()[i], q.value()[i]);
  EXPECT_EQ(b.steps(), 2);
}

TEST(Activations, LeakySlope) {
  const auto x = Tensor<double>::from({1, 1, 1, 2}, {-1.0, 2.0});
  const auto y = leaky_relu(x, 0.2);
  EXPECT_DOUBLE_EQ(y.value()[0], -0.2);
  EXPECT_DOUBLE_EQ(y.value()[1], 2.0);
  const auto sp = softplus(Tensor<double>::from({1, 1, 1, 1}, {0.0}));
  EXPECT_NEAR(sp.item(), std::log(2.0), 1e-15);
}

TEST(NetworkSpec, RejectsBadGraphs) {
  NetworkSpec s;
  s.name = "bad";
  s.inputs = {{1, 4, 4, 1}};
  s.layers = {make_layer(LayerKind::relu, "r", {Source::layer(3)})};
  EXPECT_THROW(Network<float>{s}, InvalidInput);
  s.layers = {resize_layer(LayerKind::random_crop, "c", 5, 5)};
  EXPECT_THROW(Network<float>{s}, InvalidInput);
  s.layers = {make_layer(LayerKind::residual_add, "a", {Source::input(0), Source::input(1)})};
  EXPECT_THROW(Network<float>{s}, InvalidInput);
}

TEST(NetworkSpec, HashTracksDescription) {
  NetworkSpec a = bn_spec(), b = bn_spec();
  EXPECT_EQ(a.hash(), b.hash());
  b.layers[0].out_channels = 3;
  EXPECT_NE(a.hash(), b.hash());
}
