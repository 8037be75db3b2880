#include "gemini/heads.hpp"

namespace gemini {

HeadGradients HeadGradients::zeros(int num_classes) {
  HeadGradients g;
  g.action.assign(static_cast<size_t>(num_classes) + 1, 0.0);
  g.tiou.assign(static_cast<size_t>(num_classes), 0.0);
  return g;
}

HeadGradients HeadGradients::scaled(double factor) const {
  HeadGradients g = *this;
  for (double& v : g.action) v *= factor;
  for (double& v : g.tiou) v *= factor;
  for (double& v : g.regression) v *= factor;
  return g;
}

HeadOutputs fuse_equal(const HeadOutputs& a, const HeadOutputs& b) {
  HeadOutputs out = a;
  for (size_t i = 0; i < out.action_logits.size(); ++i) {
    out.action_logits[i] = 0.5 * a.action_logits[i] + 0.5 * b.action_logits[i];
  }
  for (size_t i = 0; i < out.tiou_logits.size(); ++i) {
    out.tiou_logits[i] = 0.5 * a.tiou_logits[i] + 0.5 * b.tiou_logits[i];
  }
  out.regression.d_loc = 0.5 * a.regression.d_loc + 0.5 * b.regression.d_loc;
  out.regression.d_len = 0.5 * a.regression.d_len + 0.5 * b.regression.d_len;
  return out;
}

PredictionHeads::PredictionHeads(const std::string& name, int action_in, int context_in,
                                 int num_classes)
    : action(name + ".action", action_in, num_classes + 1),
      tiou(name + ".tiou", context_in, num_classes),
      regression(name + ".regression", context_in, 2) {}

void PredictionHeads::init(std::mt19937_64& rng, double stddev) {
  action.init(rng, stddev);
  tiou.init(rng, stddev);
  regression.init(rng, stddev * 0.1);
}

HeadOutputs PredictionHeads::forward(std::span<const double> action_in,
                                     std::span<const double> context_in) const {
  HeadOutputs out;
  out.action_logits = action.forward(action_in);
  out.tiou_logits = tiou.forward(context_in);
  const auto reg = regression.forward(context_in);
  out.regression = OffsetPair{reg[0], reg[1]};
  return out;
}

std::pair<std::vector<double>, std::vector<double>> PredictionHeads::backward(
    std::span<const double> action_in, std::span<const double> context_in,
    const HeadGradients& grads) {
  std::vector<double> d_action = action.backward(action_in, grads.action);
  std::vector<double> d_context = tiou.backward(context_in, grads.tiou);
  const std::vector<double> d_reg = regression.backward(context_in, grads.regression);
  for (size_t i = 0; i < d_context.size(); ++i) d_context[i] += d_reg[i];
  return {std::move(d_action), std::move(d_context)};
}

}  // namespace gemini
