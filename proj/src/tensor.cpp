#include "gemini/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace gemini {

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  const size_t n = std::accumulate(shape_.begin(), shape_.end(), size_t{1},
                                   [](size_t a, int b) { return a * static_cast<size_t>(b); });
  data_.assign(n, fill);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::string s;
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s;
}

Parameter::Parameter(std::string name, std::vector<int> shape)
    : name(std::move(name)), value(shape), grad(shape), velocity(shape) {}

}  // namespace gemini
