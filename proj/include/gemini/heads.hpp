#pragma once

#include <array>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gemini/layers.hpp"
#include "gemini/timeline.hpp"

namespace gemini {

/// Raw outputs of one set of prediction heads for a single proposal.
struct HeadOutputs {
  std::vector<double> action_logits;  // K+1, index 0 is background
  std::vector<double> tiou_logits;    // K
  OffsetPair regression;
};

/// dLoss/dHeadOutputs, same layout as HeadOutputs.
struct HeadGradients {
  std::vector<double> action;
  std::vector<double> tiou;
  std::array<double, 2> regression{0.0, 0.0};

  static HeadGradients zeros(int num_classes);
  HeadGradients scaled(double factor) const;
};

/// Equal-weight average of two head outputs.
HeadOutputs fuse_equal(const HeadOutputs& a, const HeadOutputs& b);

/// The three classifier/regressor heads: action logits from one input,
/// tIoU logits and the (d_loc, d_len) regression from a second one.
class PredictionHeads {
 public:
  PredictionHeads() = default;
  PredictionHeads(const std::string& name, int action_in, int context_in, int num_classes);

  void init(std::mt19937_64& rng, double stddev);

  HeadOutputs forward(std::span<const double> action_in, std::span<const double> context_in) const;

  /// Returns (dL/d action_in, dL/d context_in).
  std::pair<std::vector<double>, std::vector<double>> backward(std::span<const double> action_in,
                                                               std::span<const double> context_in,
                                                               const HeadGradients& grads);

  void collect(ParameterList& out) {
    action.collect(out);
    tiou.collect(out);
    regression.collect(out);
  }

  int num_classes() const { return tiou.out_features(); }

  Linear action;
  Linear tiou;
  Linear regression;
};

}  // namespace gemini
