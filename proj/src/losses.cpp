#include "gemini/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemini/error.hpp"
#include "gemini/layers.hpp"

namespace gemini {

void LossWeights::validate() const {
  for (double w : {lambda_tiou, mu_reg, aux_weight}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
}

namespace {

int one_hot_index(const Tensor& labels, int row) {
  int hot = -1;
  for (int c = 0; c < labels.dim(1); ++c) {
    const double v = labels.at(row, c);
    if (v == 1.0) {
      if (hot >= 0) throw LabelError("label row " + std::to_string(row) + " is not one-hot");
      hot = c;
    } else if (v != 0.0) {
      throw LabelError("label row " + std::to_string(row) + " is not one-hot");
    }
  }
  if (hot < 0) throw LabelError("label row " + std::to_string(row) + " is not one-hot");
  return hot;
}

std::span<const double> row_of(const Tensor& t, int r) {
  return t.values().subspan(static_cast<size_t>(r) * t.dim(1), static_cast<size_t>(t.dim(1)));
}

}  // namespace

double action_loss(const Tensor& logits, const Tensor& labels, Tensor* grad) {
  const int n = logits.dim(0);
  if (n == 0) throw Error("action loss over an empty batch");
  if (labels.shape() != logits.shape()) throw ShapeError("action loss: logits/labels shape mismatch");
  if (grad) *grad = Tensor(logits.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = one_hot_index(labels, i);
    const auto logp = log_softmax(row_of(logits, i));
    total -= logp[static_cast<size_t>(y)];
    if (grad) {
      for (int c = 0; c < logits.dim(1); ++c) {
        grad->at(i, c) = (std::exp(logp[static_cast<size_t>(c)]) - (c == y ? 1.0 : 0.0)) / n;
      }
    }
  }
  return total / n;
}

int ohem_keep_count(int n, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ConfigError("hard-example keep fraction must lie in (0,1]");
  }
  // The epsilon absorbs representation error, e.g. 12 * (1.0/6.0).
  const int k = static_cast<int>(std::ceil(static_cast<double>(n) * keep_fraction - 1e-9));
  return std::clamp(k, 1, n);
}

OhemResult tiou_loss_with_ohem(const Tensor& logits, const Tensor& labels, double keep_fraction,
                               Tensor* grad, TiouMode mode) {
  const int n = logits.rank() == 2 ? logits.dim(0) : 0;
  if (n == 0) throw Error("tIoU loss over an empty batch");
  if (labels.shape() != logits.shape()) throw ShapeError("tIoU loss: logits/labels shape mismatch");
  const int k = logits.dim(1);
  OhemResult result;
  result.per_sample.resize(static_cast<size_t>(n));
  std::vector<std::vector<double>> sample_grad(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& g = sample_grad[static_cast<size_t>(i)];
    g.assign(static_cast<size_t>(k), 0.0);
    const auto row = row_of(logits, i);
    if (mode == TiouMode::kSoftmax) {
      const int y = one_hot_index(labels, i);
      const auto logp = log_softmax(row);
      result.per_sample[static_cast<size_t>(i)] = -logp[static_cast<size_t>(y)];
      for (int c = 0; c < k; ++c) {
        g[static_cast<size_t>(c)] = std::exp(logp[static_cast<size_t>(c)]) - (c == y ? 1.0 : 0.0);
      }
    } else {
      double loss = 0.0;
      for (int c = 0; c < k; ++c) {
        const double z = row[static_cast<size_t>(c)];
        const double t = labels.at(i, c);
        if (t != 0.0 && t != 1.0) throw LabelError("sigmoid tIoU labels must be 0 or 1");
        loss += t > 0.0 ? softplus(-z) : softplus(z);
        g[static_cast<size_t>(c)] = sigmoid(z) - t;
      }
      result.per_sample[static_cast<size_t>(i)] = loss;
    }
  }
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return result.per_sample[static_cast<size_t>(a)] > result.per_sample[static_cast<size_t>(b)];
  });
  const int keep = ohem_keep_count(n, keep_fraction);
  result.selected.assign(order.begin(), order.begin() + keep);
  if (grad) *grad = Tensor(logits.shape());
  for (int i : result.selected) {
    result.loss += result.per_sample[static_cast<size_t>(i)];
    if (grad) {
      for (int c = 0; c < k; ++c) grad->at(i, c) = sample_grad[static_cast<size_t>(i)][static_cast<size_t>(c)] / keep;
    }
  }
  result.loss /= keep;
  return result;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

double regression_loss(std::span<const OffsetPair> pred, std::span<const OffsetPair> target,
                       std::vector<std::array<double, 2>>* grad) {
  if (pred.size() != target.size()) {
    throw ShapeError("regression loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  }
  if (pred.empty()) throw Error("regression loss over an empty batch");
  const double n = static_cast<double>(pred.size());
  double total = 0.0;
  if (grad) grad->assign(pred.size(), {0.0, 0.0});
  for (size_t i = 0; i < pred.size(); ++i) {
    const double r_loc = pred[i].d_loc - target[i].d_loc;
    const double r_len = pred[i].d_len - target[i].d_len;
    total += smooth_l1(r_loc) + smooth_l1(r_len);
    if (grad) (*grad)[i] = {smooth_l1_derivative(r_loc) / n, smooth_l1_derivative(r_len) / n};
  }
  return total / n;
}

LossBreakdown multitask_loss(std::span<const HeadOutputs> outputs,
                             std::span<const SampleTarget> targets, const LossOptions& options,
                             std::vector<HeadGradients>* grads) {
  if (outputs.size() != targets.size()) throw ShapeError("multitask loss: outputs/targets mismatch");
  options.weights.validate();
  LossBreakdown out;
  if (outputs.empty()) {
    out.als_empty = out.tiou_empty = out.reg_empty = true;
    return out;
  }
  const int k = static_cast<int>(outputs[0].tiou_logits.size());
  if (grads) {
    grads->assign(outputs.size(), HeadGradients::zeros(k));
  }

  std::vector<int> als_idx;
  std::vector<int> tiou_idx;
  std::vector<int> reg_idx;
  for (size_t i = 0; i < targets.size(); ++i) {
    const auto kind = targets[i].kind;
    if (kind != ProposalKind::kConfusing) als_idx.push_back(static_cast<int>(i));
    if (kind != ProposalKind::kBackground) tiou_idx.push_back(static_cast<int>(i));
    if (kind == ProposalKind::kPositive) reg_idx.push_back(static_cast<int>(i));
  }

  if (als_idx.empty()) {
    out.als_empty = true;
  } else {
    const int n = static_cast<int>(als_idx.size());
    Tensor logits({n, k + 1});
    Tensor labels({n, k + 1});
    for (int r = 0; r < n; ++r) {
      const auto& o = outputs[static_cast<size_t>(als_idx[static_cast<size_t>(r)])];
      std::copy(o.action_logits.begin(), o.action_logits.end(), logits.data() + static_cast<size_t>(r) * (k + 1));
      const auto& t = targets[static_cast<size_t>(als_idx[static_cast<size_t>(r)])];
      labels.at(r, t.kind == ProposalKind::kPositive ? t.class_id : 0) = 1.0;
    }
    Tensor g;
    out.als = action_loss(logits, labels, grads ? &g : nullptr);
    if (grads) {
      for (int r = 0; r < n; ++r) {
        auto& dst = (*grads)[static_cast<size_t>(als_idx[static_cast<size_t>(r)])].action;
        for (int c = 0; c < k + 1; ++c) dst[static_cast<size_t>(c)] += g.at(r, c);
      }
    }
  }

  if (tiou_idx.empty()) {
    out.tiou_empty = true;
  } else {
    const int n = static_cast<int>(tiou_idx.size());
    Tensor logits({n, k});
    Tensor labels({n, k});
    for (int r = 0; r < n; ++r) {
      const auto& o = outputs[static_cast<size_t>(tiou_idx[static_cast<size_t>(r)])];
      std::copy(o.tiou_logits.begin(), o.tiou_logits.end(), logits.data() + static_cast<size_t>(r) * k);
      const auto& t = targets[static_cast<size_t>(tiou_idx[static_cast<size_t>(r)])];
      if (t.class_id < 1 || t.class_id > k) {
        throw LabelError("tIoU sample without a matched class in 1.." + std::to_string(k));
      }
      if (options.tiou_mode == TiouMode::kSoftmax || t.kind == ProposalKind::kPositive) {
        labels.at(r, t.class_id - 1) = 1.0;
      }
    }
    Tensor g;
    const auto ohem = tiou_loss_with_ohem(logits, labels, options.ohem_keep, grads ? &g : nullptr,
                                          options.tiou_mode);
    out.tiou = ohem.loss;
    for (int r : ohem.selected) out.selected_hard.push_back(tiou_idx[static_cast<size_t>(r)]);
    if (grads) {
      const double w = options.weights.lambda_tiou;
      for (int r = 0; r < n; ++r) {
        auto& dst = (*grads)[static_cast<size_t>(tiou_idx[static_cast<size_t>(r)])].tiou;
        for (int c = 0; c < k; ++c) dst[static_cast<size_t>(c)] += w * g.at(r, c);
      }
    }
  }

  if (reg_idx.empty()) {
    out.reg_empty = true;
  } else {
    std::vector<OffsetPair> pred;
    std::vector<OffsetPair> target;
    for (int i : reg_idx) {
      pred.push_back(outputs[static_cast<size_t>(i)].regression);
      target.push_back(targets[static_cast<size_t>(i)].offsets);
    }
    std::vector<std::array<double, 2>> g;
    out.reg = regression_loss(pred, target, grads ? &g : nullptr);
    if (grads) {
      const double w = options.weights.mu_reg;
      for (size_t r = 0; r < reg_idx.size(); ++r) {
        auto& dst = (*grads)[static_cast<size_t>(reg_idx[r])].regression;
        dst[0] += w * g[r][0];
        dst[1] += w * g[r][1];
      }
    }
  }

  out.total = out.als + options.weights.lambda_tiou * out.tiou + options.weights.mu_reg * out.reg;
  return out;
}

BatchLossReport principal_loss(std::span<const HeadOutputs> outputs,
                               std::span<const SampleTarget> targets, const LossOptions& options,
                               std::optional<std::span<const HeadOutputs>> aux_outputs,
                               std::vector<HeadGradients>* grads,
                               std::vector<HeadGradients>* aux_grads) {
  BatchLossReport report;
  report.principal = multitask_loss(outputs, targets, options, grads);
  report.total = report.principal->total;
  report.selected_hard_indices = report.principal->selected_hard;
  if (aux_outputs) {
    report.auxiliary = multitask_loss(*aux_outputs, targets, options, aux_grads);
    const double w = options.weights.aux_weight;
    report.total += w * report.auxiliary->total;
    if (aux_grads) {
      for (auto& g : *aux_grads) g = g.scaled(w);
    }
  }
  return report;
}

}  // namespace gemini
