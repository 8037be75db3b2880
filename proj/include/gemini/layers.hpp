#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "gemini/tensor.hpp"

namespace gemini {

/// Fully connected layer y = W x + b with W stored (out, in).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features);

  int in_features() const { return weight.value.dim(1); }
  int out_features() const { return weight.value.dim(0); }

  /// Gaussian init with the given standard deviation; zero bias.
  void init(std::mt19937_64& rng, double stddev);

  std::vector<double> forward(std::span<const double> x) const;
  /// Accumulates parameter gradients and returns dL/dx.
  std::vector<double> backward(std::span<const double> x, std::span<const double> dy);

  void collect(ParameterList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter weight;
  Parameter bias;
};

struct Conv2dSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 1;
  int pad_w = 1;
};

/// Output extent of a strided window; returns 0 when the window does not fit.
int window_output_size(int input, int kernel, int stride, int pad);

/// 2-D convolution over a single CHW sample.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, const Conv2dSpec& spec, bool with_bias = true);

  const Conv2dSpec& spec() const { return spec_; }
  bool has_bias() const { return with_bias_; }

  /// He-normal weights scaled by `gain`; zero bias.
  void init(std::mt19937_64& rng, double gain = 1.0);

  /// Output (height, width) for a given input extent; throws ShapeError naming
  /// `layer` when the kernel no longer fits.
  std::pair<int, int> output_hw(int in_h, int in_w, const std::string& layer) const;

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy);

  void collect(ParameterList& out) {
    out.push_back(&weight);
    if (with_bias_) out.push_back(&bias);
  }

  Parameter weight;
  Parameter bias;

 private:
  Conv2dSpec spec_;
  bool with_bias_ = true;
};

void relu_inplace(Tensor& t);
/// dy *= [activation > 0], where `activation` is the ReLU output.
void relu_backward_inplace(Tensor& dy, const Tensor& activation);

struct PoolSpec {
  bool global = false;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
};

Tensor avg_pool2d(const Tensor& x, const PoolSpec& spec);
Tensor avg_pool2d_backward(const std::vector<int>& input_shape, const Tensor& dy,
                           const PoolSpec& spec);

double softplus(double x);
double sigmoid(double x);
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace gemini
