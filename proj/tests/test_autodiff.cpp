#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dlss/error.hpp"
#include "dlss/nn/network.hpp"
#include "dlss/nn/ops.hpp"
#include "helpers.hpp"

using namespace dlss;
using namespace dlss::nn;

namespace {

using Td = Tensor<double>;
using Fn = std::function<Td(const std::vector<Td>&)>;

// Central differences against the recorded backward pass for every leaf entry.
void check_gradients(const std::vector<Td>& leaves, const Fn& f, double tol = 1e-4, double h = 1e-6) {
  for (Td l : leaves) l.zero_grad();
  Td out = f(leaves);
  ASSERT_EQ(out.numel(), 1u);
  backward(out);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Td leaf = leaves[k];
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double x0 = leaf.value()[i];
      double up, down;
      {
        NoGradGuard g;
        leaf.value()[i] = x0 + h;
        up = f(leaves).item();
        leaf.value()[i] = x0 - h;
        down = f(leaves).item();
        leaf.value()[i] = x0;
      }
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      EXPECT_LE(std::abs(a - numeric), tol * std::max(std::abs(a), std::abs(numeric)) + 1e-8)
          << "leaf " << k << " entry " << i << ": analytic " << a << " numeric " << numeric;
    }
  }
}

std::vector<double> target_for(const Shape& s, std::uint64_t seed) {
  const Td t = test::random_tensor<double>(s, seed, -1, 1, false);
  return {t.value().begin(), t.value().end()};
}

// Reduces any tensor to a scalar through an mse against a fixed target.
Td reduce(const Td& y, std::uint64_t seed = 99) {
  const auto t = target_for(y.shape(), seed);
  return mse<double>(y, t);
}

// Keeps values away from the kinks of piecewise-linear ops.
Td away_from_zero(Shape s, std::uint64_t seed) {
  Td t = test::random_tensor<double>(s, seed, 0.1, 1.0);
  std::mt19937_64 rng(seed);
  for (double& v : t.value()) {
    if (rng() & 1) v = -v;
  }
  return t;
}

}  // namespace

TEST(Autodiff, Conv2dStrideOne) {
  const Td x = test::random_tensor<double>({2, 5, 6, 2}, 1);
  const Td w = test::random_tensor<double>({3, 3, 2, 3}, 2);
  check_gradients({x, w}, [](const auto& v) { return reduce(conv2d(v[0], v[1], 1)); });
}

TEST(Autodiff, Conv2dStrideTwo) {
  const Td x = test::random_tensor<double>({1, 7, 6, 2}, 3);
  const Td w = test::random_tensor<double>({3, 3, 2, 2}, 4);
  check_gradients({x, w}, [](const auto& v) { return reduce(conv2d(v[0], v[1], 2)); });
}

TEST(Autodiff, BiasAndLinear) {
  const Td x = test::random_tensor<double>({2, 2, 2, 3}, 5);
  const Td w = test::random_tensor<double>({1, 1, 12, 4}, 6);
  const Td b = test::random_tensor<double>({1, 1, 1, 4}, 7);
  check_gradients({x, w, b}, [](const auto& v) { return reduce(add_bias(linear(v[0], v[1]), v[2])); });
}

TEST(Autodiff, Resizes) {
  const Td x = test::random_tensor<double>({1, 4, 5, 2}, 8);
  check_gradients({x}, [](const auto& v) { return reduce(bilinear_resize(v[0], 7, 9)); });
  check_gradients({x}, [](const auto& v) { return reduce(bilinear_resize(v[0], 2, 3)); });
  check_gradients({x}, [](const auto& v) { return reduce(nearest_resize(v[0], 8, 10)); });
}

TEST(Autodiff, Activations) {
  const Td x = away_from_zero({1, 3, 3, 2}, 9);
  check_gradients({x}, [](const auto& v) { return reduce(relu(v[0])); });
  check_gradients({x}, [](const auto& v) { return reduce(leaky_relu(v[0], 0.2)); });
  check_gradients({x}, [](const auto& v) { return reduce(softplus(v[0])); });
}

TEST(Autodiff, ElementwiseAndCrop) {
  const Td a = test::random_tensor<double>({2, 4, 4, 2}, 10);
  const Td b = test::random_tensor<double>({2, 4, 4, 2}, 11);
  check_gradients({a, b}, [](const auto& v) { return reduce(add(v[0], v[1])); });
  check_gradients({a}, [](const auto& v) { return reduce(affine(v[0], 1.7, -0.3)); });
  check_gradients({a}, [](const auto& v) { return reduce(crop(v[0], 1, 2, 2, 2)); });
  const std::vector<double> means{0.3, -0.2};
  check_gradients({a}, [&](const auto& v) { return reduce(subtract_channel<double>(v[0], means)); });
}

TEST(Autodiff, WeightNorm) {
  const Td v0 = test::random_tensor<double>({3, 3, 2, 4}, 12);
  const Td g = test::random_tensor<double>({1, 1, 1, 4}, 13, 0.5, 1.5);
  check_gradients({v0, g}, [](const auto& v) { return reduce(weight_norm(v[0], v[1])); });
}

TEST(Autodiff, SpectralDivide) {
  const Td w = test::random_tensor<double>({3, 3, 2, 4}, 14);
  const auto u0 = target_for({1, 1, 1, 4}, 15);
  const auto v0 = target_for({1, 1, 1, 18}, 16);
  check_gradients({w}, [&](const auto& v) { return reduce(spectral_divide<double>(v[0], u0, v0)); });
}

TEST(Autodiff, FixedBlurAndProbes) {
  const Td x = test::random_tensor<double>({2, 7, 7, 1}, 17);
  const BlurKernel k = gaussian_kernel(3, 1.5);
  check_gradients({x}, [&](const auto& v) { return reduce(fixed_blur(v[0], k)); });
  const auto t = target_for(x.shape(), 18);
  check_gradients({x}, [&](const auto& v) { return reduce(overwrite_probes<double>(v[0], t, 3)); });
}

TEST(Autodiff, Reductions) {
  const Td x = test::random_tensor<double>({3, 2, 2, 2}, 19);
  const auto t = target_for(x.shape(), 20);
  check_gradients({x}, [](const auto& v) { return mse_to_value(v[0], 0.25); });
  check_gradients({x}, [&](const auto& v) { return mean(mse_per_sample<double>(v[0], t)); });
  check_gradients({x}, [](const auto& v) { return mean(v[0]); });
  check_gradients({x}, [&](const auto& v) {
    return weighted_sum<double>({mean(v[0]), mse<double>(v[0], t)}, {0.5, 3.0});
  });
}

TEST(Autodiff, TwoLayerConvNetwork) {
  NetworkSpec s;
  s.name = "probe";
  s.inputs = {{1, 6, 6, 1}};
  s.layers = {conv_layer("c0", 3, 3, 1, NormKind::weight_norm, true), make_layer(LayerKind::leaky_relu, "a0"),
              conv_layer("c1", 1, 3, 1, NormKind::none, true)};
  Network<double> net(s);
  std::mt19937_64 rng(21);
  net.init_normal(rng, 0.5, false);
  for (auto& p : net.params()) {
    if (p.name.ends_with(".b")) {
      for (double& b : p.tensor.value()) b = normal_draw(rng, 0, 0.1);
    }
  }
  const Td x = test::random_tensor<double>({2, 6, 6, 1}, 22, -1, 1, false);
  std::vector<Td> leaves;
  for (auto& p : net.params()) leaves.push_back(p.tensor);
  check_gradients(leaves, [&](const auto&) { return reduce(net.forward({x}, Mode::train)); });
}

TEST(Autodiff, SecondBackwardThrows) {
  const Td x = test::random_tensor<double>({1, 2, 2, 1}, 23);
  const Td y = mean(affine(x, 2.0, 0.0));
  backward(y);
  EXPECT_NEAR(x.grad()[0], 0.5, 1e-15);
  EXPECT_THROW(backward(y), StateError);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  const Td x = test::random_tensor<double>({1, 2, 2, 1}, 24);
  EXPECT_TRUE(grad_enabled());
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    const Td y = mean(x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_THROW(backward(y), StateError);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(mean(x).requires_grad());
}

TEST(Autodiff, GradientsAccumulateAcrossPasses) {
  const Td x = test::random_tensor<double>({1, 1, 1, 3}, 25);
  backward(mean(x));
  backward(mean(x));
  for (double g : x.grad()) EXPECT_NEAR(g, 2.0 / 3.0, 1e-15);
}

TEST(Autodiff, FloatMatchesDouble) {
  const Td xd = test::random_tensor<double>({1, 5, 5, 2}, 26);
  const Td wd = test::random_tensor<double>({3, 3, 2, 2}, 27);
  auto xf = test::random_tensor<float>({1, 5, 5, 2}, 26);
  auto wf = test::random_tensor<float>({3, 3, 2, 2}, 27);
  backward(mean(relu(conv2d(xd, wd, 1))));
  backward(mean(relu(conv2d(xf, wf, 1))));
  for (std::size_t i = 0; i < wd.numel(); ++i) EXPECT_NEAR(wd.grad()[i], wf.grad()[i], 1e-5);
}
