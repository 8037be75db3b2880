#include "gemini/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gemini/error.hpp"

namespace gemini {

Linear::Linear(const std::string& name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}), bias(name + ".bias", {out_features}) {}

void Linear::init(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& w : weight.value.values()) w = dist(rng);
  bias.value.fill(0.0);
}

std::vector<double> Linear::forward(std::span<const double> x) const {
  const int in = in_features();
  const int out = out_features();
  if (static_cast<int>(x.size()) != in) {
    throw ShapeError(weight.name + ": expected input of " + std::to_string(in) + ", got " +
                     std::to_string(x.size()));
  }
  std::vector<double> y(static_cast<size_t>(out));
  const double* w = weight.value.data();
  for (int o = 0; o < out; ++o) {
    double acc = bias.value[static_cast<size_t>(o)];
    const double* row = w + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[static_cast<size_t>(i)];
    y[static_cast<size_t>(o)] = acc;
  }
  return y;
}

std::vector<double> Linear::backward(std::span<const double> x, std::span<const double> dy) {
  const int in = in_features();
  const int out = out_features();
  std::vector<double> dx(static_cast<size_t>(in), 0.0);
  const double* w = weight.value.data();
  double* gw = weight.grad.data();
  for (int o = 0; o < out; ++o) {
    const double g = dy[static_cast<size_t>(o)];
    if (g == 0.0) continue;
    bias.grad[static_cast<size_t>(o)] += g;
    const double* row = w + static_cast<size_t>(o) * in;
    double* grow = gw + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      grow[i] += g * x[static_cast<size_t>(i)];
      dx[static_cast<size_t>(i)] += g * row[i];
    }
  }
  return dx;
}

int window_output_size(int input, int kernel, int stride, int pad) {
  const int span = input + 2 * pad - kernel;
  if (span < 0 || stride < 1) return 0;
  return span / stride + 1;
}

Conv2d::Conv2d(const std::string& name, const Conv2dSpec& spec, bool with_bias)
    : weight(name + ".weight",
             {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}),
      bias(name + ".bias", {spec.out_channels}),
      spec_(spec),
      with_bias_(with_bias) {}

void Conv2d::init(std::mt19937_64& rng, double gain) {
  const double fan_in = static_cast<double>(spec_.in_channels * spec_.kernel_h * spec_.kernel_w);
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
  for (double& w : weight.value.values()) w = dist(rng);
  bias.value.fill(0.0);
}

std::pair<int, int> Conv2d::output_hw(int in_h, int in_w, const std::string& layer) const {
  const int oh = window_output_size(in_h, spec_.kernel_h, spec_.stride_h, spec_.pad_h);
  const int ow = window_output_size(in_w, spec_.kernel_w, spec_.stride_w, spec_.pad_w);
  if (oh < 1 || ow < 1) {
    throw ShapeError("shape underflow at layer " + layer + ": input " + std::to_string(in_h) +
                     "x" + std::to_string(in_w) + " too small for kernel " +
                     std::to_string(spec_.kernel_h) + "x" + std::to_string(spec_.kernel_w));
  }
  return {oh, ow};
}

namespace {

// Range of output columns o such that 0 <= o*stride - pad + k < extent.
std::pair<int, int> valid_range(int out_extent, int in_extent, int stride, int pad, int k) {
  int lo = 0;
  while (lo < out_extent && lo * stride - pad + k < 0) ++lo;
  int hi = out_extent;
  while (hi > lo && (hi - 1) * stride - pad + k >= in_extent) --hi;
  return {lo, hi};
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != spec_.in_channels) {
    throw ShapeError(weight.name + ": expected " + std::to_string(spec_.in_channels) +
                     " input channels, got shape " + x.shape_string());
  }
  const int ih = x.dim(1);
  const int iw = x.dim(2);
  const auto [oh, ow] = output_hw(ih, iw, weight.name);
  Tensor y({spec_.out_channels, oh, ow});
  const int kh_n = spec_.kernel_h;
  const int kw_n = spec_.kernel_w;
  const double* w = weight.value.data();
  for (int oc = 0; oc < spec_.out_channels; ++oc) {
    double* out = y.data() + static_cast<size_t>(oc) * oh * ow;
    if (with_bias_) std::fill(out, out + static_cast<size_t>(oh) * ow, bias.value[static_cast<size_t>(oc)]);
    for (int ic = 0; ic < spec_.in_channels; ++ic) {
      const double* in = x.data() + static_cast<size_t>(ic) * ih * iw;
      for (int kh = 0; kh < kh_n; ++kh) {
        const auto [r0, r1] = valid_range(oh, ih, spec_.stride_h, spec_.pad_h, kh);
        for (int kw = 0; kw < kw_n; ++kw) {
          const double wv = w[((static_cast<size_t>(oc) * spec_.in_channels + ic) * kh_n + kh) * kw_n + kw];
          const auto [c0, c1] = valid_range(ow, iw, spec_.stride_w, spec_.pad_w, kw);
          for (int r = r0; r < r1; ++r) {
            const double* in_row = in + static_cast<size_t>(r * spec_.stride_h - spec_.pad_h + kh) * iw;
            double* out_row = out + static_cast<size_t>(r) * ow;
            for (int c = c0; c < c1; ++c) {
              out_row[c] += wv * in_row[c * spec_.stride_w - spec_.pad_w + kw];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy) {
  const int ih = x.dim(1);
  const int iw = x.dim(2);
  const int oh = dy.dim(1);
  const int ow = dy.dim(2);
  const int kh_n = spec_.kernel_h;
  const int kw_n = spec_.kernel_w;
  Tensor dx(x.shape());
  const double* w = weight.value.data();
  double* gw = weight.grad.data();
  for (int oc = 0; oc < spec_.out_channels; ++oc) {
    const double* g = dy.data() + static_cast<size_t>(oc) * oh * ow;
    if (with_bias_) {
      double sum = 0.0;
      for (int i = 0; i < oh * ow; ++i) sum += g[i];
      bias.grad[static_cast<size_t>(oc)] += sum;
    }
    for (int ic = 0; ic < spec_.in_channels; ++ic) {
      const double* in = x.data() + static_cast<size_t>(ic) * ih * iw;
      double* din = dx.data() + static_cast<size_t>(ic) * ih * iw;
      for (int kh = 0; kh < kh_n; ++kh) {
        const auto [r0, r1] = valid_range(oh, ih, spec_.stride_h, spec_.pad_h, kh);
        for (int kw = 0; kw < kw_n; ++kw) {
          const size_t widx = ((static_cast<size_t>(oc) * spec_.in_channels + ic) * kh_n + kh) * kw_n + kw;
          const double wv = w[widx];
          const auto [c0, c1] = valid_range(ow, iw, spec_.stride_w, spec_.pad_w, kw);
          double acc = 0.0;
          for (int r = r0; r < r1; ++r) {
            const size_t in_off = static_cast<size_t>(r * spec_.stride_h - spec_.pad_h + kh) * iw;
            const double* g_row = g + static_cast<size_t>(r) * ow;
            for (int c = c0; c < c1; ++c) {
              const size_t col = static_cast<size_t>(c * spec_.stride_w - spec_.pad_w + kw);
              acc += g_row[c] * in[in_off + col];
              din[in_off + col] += wv * g_row[c];
            }
          }
          gw[widx] += acc;
        }
      }
    }
  }
  return dx;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(Tensor& dy, const Tensor& activation) {
  for (size_t i = 0; i < dy.size(); ++i) {
    if (!(activation[i] > 0.0)) dy[i] = 0.0;
  }
}

namespace {

PoolSpec resolve(const PoolSpec& spec, int h, int w) {
  if (!spec.global) return spec;
  return PoolSpec{false, h, w, 1, 1};
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, const PoolSpec& spec_in) {
  const int c_n = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  const PoolSpec spec = resolve(spec_in, h, w);
  const int oh = window_output_size(h, spec.kernel_h, spec.stride_h, 0);
  const int ow = window_output_size(w, spec.kernel_w, spec.stride_w, 0);
  if (oh < 1 || ow < 1) {
    throw ShapeError("shape underflow at layer avg_pool: input " + std::to_string(h) + "x" +
                     std::to_string(w) + " too small for window " +
                     std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w));
  }
  const double inv = 1.0 / static_cast<double>(spec.kernel_h * spec.kernel_w);
  Tensor y({c_n, oh, ow});
  for (int c = 0; c < c_n; ++c) {
    for (int r = 0; r < oh; ++r) {
      for (int q = 0; q < ow; ++q) {
        double acc = 0.0;
        for (int a = 0; a < spec.kernel_h; ++a) {
          for (int b = 0; b < spec.kernel_w; ++b) {
            acc += x.at(c, r * spec.stride_h + a, q * spec.stride_w + b);
          }
        }
        y.at(c, r, q) = acc * inv;
      }
    }
  }
  return y;
}

Tensor avg_pool2d_backward(const std::vector<int>& input_shape, const Tensor& dy,
                           const PoolSpec& spec_in) {
  Tensor dx(input_shape);
  const PoolSpec spec = resolve(spec_in, input_shape[1], input_shape[2]);
  const double inv = 1.0 / static_cast<double>(spec.kernel_h * spec.kernel_w);
  for (int c = 0; c < dy.dim(0); ++c) {
    for (int r = 0; r < dy.dim(1); ++r) {
      for (int q = 0; q < dy.dim(2); ++q) {
        const double g = dy.at(c, r, q) * inv;
        for (int a = 0; a < spec.kernel_h; ++a) {
          for (int b = 0; b < spec.kernel_w; ++b) {
            dx.at(c, r * spec.stride_h + a, q * spec.stride_w + b) += g;
          }
        }
      }
    }
  }
  return dx;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

}  // namespace gemini
