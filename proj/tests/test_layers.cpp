#include <cmath>
#include <random>

#include "doctest.h"
#include "gemini/error.hpp"
#include "gemini/layers.hpp"
#include "support.hpp"

using namespace gemini;
using gemini::testing::dot;
using gemini::testing::max_input_grad_error;
using gemini::testing::max_param_grad_error;
using gemini::testing::probe_weights;
using gemini::testing::random_tensor;

namespace {

// Direct 7-loop convolution with explicit zero padding.
Tensor conv_oracle(const Tensor& x, const Conv2d& conv) {
  const auto& s = conv.spec();
  const int ho = window_output_size(x.dim(1), s.kernel_h, s.stride_h, s.pad_h);
  const int wo = window_output_size(x.dim(2), s.kernel_w, s.stride_w, s.pad_w);
  Tensor y({s.out_channels, ho, wo});
  for (int o = 0; o < s.out_channels; ++o) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double acc = conv.has_bias() ? conv.bias.value[static_cast<size_t>(o)] : 0.0;
        for (int c = 0; c < s.in_channels; ++c) {
          for (int ki = 0; ki < s.kernel_h; ++ki) {
            for (int kj = 0; kj < s.kernel_w; ++kj) {
              const int r = i * s.stride_h - s.pad_h + ki;
              const int q = j * s.stride_w - s.pad_w + kj;
              if (r < 0 || q < 0 || r >= x.dim(1) || q >= x.dim(2)) continue;
              const size_t widx = ((static_cast<size_t>(o) * s.in_channels + c) * s.kernel_h + ki) * s.kernel_w + kj;
              acc += conv.weight.value[widx] * x.at(c, r, q);
            }
          }
        }
        y.at(o, i, j) = acc;
      }
    }
  }
  return y;
}

Tensor probe_grad(const Tensor& y, const std::vector<double>& w) {
  Tensor g(y.shape());
  for (size_t i = 0; i < g.size(); ++i) g[i] = w[i];
  return g;
}

}  // namespace

TEST_CASE("window output size") {
  CHECK(window_output_size(129, 3, 2, 1) == 65);
  CHECK(window_output_size(9, 3, 2, 1) == 5);
  CHECK(window_output_size(5, 3, 1, 1) == 5);
  CHECK(window_output_size(2, 3, 1, 0) == 0);
}

TEST_CASE("linear forward and gradients") {
  std::mt19937_64 rng(1);
  Linear fc("fc", 5, 4);
  fc.init(rng, 0.5);
  for (double& b : fc.bias.value.values()) b = 0.1;
  const auto x = random_tensor({5}, rng);
  const auto y = fc.forward(x.values());
  for (int o = 0; o < 4; ++o) {
    double acc = 0.1;
    for (int i = 0; i < 5; ++i) acc += fc.weight.value.at(o, i) * x[static_cast<size_t>(i)];
    CHECK(std::abs(y[static_cast<size_t>(o)] - acc) < 1e-12);
  }
  const auto w = probe_weights(4, 2);
  ParameterList params;
  fc.collect(params);
  std::vector<double> dx;
  const double err = max_param_grad_error(
      params, [&] { return dot(w, fc.forward(x.values())); }, [&] { dx = fc.backward(x.values(), w); });
  CHECK(err < 1e-6);
  Tensor xt = x;
  Tensor dxt({5});
  std::copy(dx.begin(), dx.end(), dxt.data());
  CHECK(max_input_grad_error(xt, dxt, [&] { return dot(w, fc.forward(xt.values())); }) < 1e-6);
}

TEST_CASE("conv2d matches the direct oracle and its gradients") {
  std::mt19937_64 rng(3);
  for (auto [sh, sw] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 2}}) {
    Conv2d conv("c", Conv2dSpec{2, 3, 3, 3, sh, sw, 1, 1});
    conv.init(rng, 1.0);
    for (double& b : conv.bias.value.values()) b = 0.05;
    Tensor x = random_tensor({2, 7, 5}, rng);
    const Tensor y = conv.forward(x);
    const Tensor ref = conv_oracle(x, conv);
    REQUIRE(y.shape() == ref.shape());
    for (size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);

    const auto w = probe_weights(y.size(), 5);
    const Tensor dy = probe_grad(y, w);
    ParameterList params;
    conv.collect(params);
    Tensor dx;
    const double perr = max_param_grad_error(
        params, [&] { return dot(w, conv.forward(x).storage()); }, [&] { dx = conv.backward(x, dy); });
    CHECK(perr < 1e-6);
    CHECK(max_input_grad_error(x, dx, [&] { return dot(w, conv.forward(x).storage()); }) < 1e-6);
  }
}

TEST_CASE("conv2d shape underflow names the layer") {
  Conv2d conv("c", Conv2dSpec{1, 1, 3, 3, 2, 2, 0, 0});
  try {
    conv.output_hw(2, 2, "conv_x");
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("conv_x") != std::string::npos);
  }
}

TEST_CASE("average pooling and its gradient") {
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({2, 6, 4}, rng);
  for (const PoolSpec spec : {PoolSpec{false, 3, 2, 2, 1}, PoolSpec{true, 1, 1, 1, 1}}) {
    const Tensor y = avg_pool2d(x, spec);
    if (spec.global) {
      REQUIRE(y.size() == 2);
      double s = 0.0;
      for (int i = 0; i < 24; ++i) s += x[static_cast<size_t>(i)];
      CHECK(std::abs(y[0] - s / 24) < 1e-12);
    } else {
      CHECK(y.shape() == std::vector<int>{2, 2, 3});
      double s = 0.0;
      for (int r = 2; r < 5; ++r)
        for (int c = 1; c < 3; ++c) s += x.at(1, r, c);
      CHECK(std::abs(y.at(1, 1, 1) - s / 6) < 1e-12);
    }
    const auto w = probe_weights(y.size(), 9);
    const Tensor dx = avg_pool2d_backward(x.shape(), probe_grad(y, w), spec);
    CHECK(max_input_grad_error(x, dx, [&] { return dot(w, avg_pool2d(x, spec).storage()); }) < 1e-6);
  }
}

TEST_CASE("relu and scalar nonlinearities") {
  Tensor t({4});
  t[0] = -1.0;
  t[1] = 2.0;
  t[2] = 0.0;
  t[3] = 0.5;
  relu_inplace(t);
  CHECK(t.storage() == std::vector<double>{0.0, 2.0, 0.0, 0.5});
  Tensor dy({4}, 1.0);
  relu_backward_inplace(dy, t);
  CHECK(dy.storage() == std::vector<double>{0.0, 1.0, 0.0, 1.0});

  CHECK(sigmoid(0.0) == 0.5);
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  const std::vector<double> z = {1.0, 2.0, 3.0, 1000.0};
  const auto p = softmax(z);
  const auto lp = log_softmax(z);
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    sum += p[i];
    CHECK(std::isfinite(lp[i]));
    CHECK(std::abs(std::exp(lp[i]) - p[i]) < 1e-12);
  }
  CHECK(sum == doctest::Approx(1.0));
}
