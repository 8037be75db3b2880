#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gemini/heads.hpp"
#include "gemini/inference.hpp"
#include "gemini/tensor.hpp"
#include "gemini/timeline.hpp"

namespace gemini::testing {

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `loss` w.r.t. every entry of every parameter,
/// compared against the gradients left in `grad` by `accumulate`. Returns the
/// worst relative error.
inline double max_param_grad_error(const ParameterList& params, const std::function<double()>& loss,
                                   const std::function<void()>& accumulate, double eps = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  accumulate();
  double worst = 0.0;
  for (Parameter* p : params) {
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + eps;
      const double up = loss();
      p->value[i] = keep - eps;
      const double down = loss();
      p->value[i] = keep;
      worst = std::max(worst, relative_error(p->grad[i], (up - down) / (2 * eps)));
    }
  }
  return worst;
}

/// Same check for the gradient w.r.t. an input tensor.
inline double max_input_grad_error(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                                   double eps = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = loss();
    x[i] = keep - eps;
    const double down = loss();
    x[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * eps)));
  }
  return worst;
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : t.values()) v = g(rng);
  return t;
}

/// Fixed random projection used as a scalar probe: sum_i w_i y_i.
inline std::vector<double> probe_weights(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(n);
  for (double& v : w) v = g(rng);
  return w;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Linear probe over head outputs; `grads` doubles as its gradient.
struct HeadProbe {
  HeadGradients grads;

  HeadProbe(int num_classes, uint64_t seed) {
    grads.action = probe_weights(static_cast<size_t>(num_classes + 1), seed);
    grads.tiou = probe_weights(static_cast<size_t>(num_classes), seed + 1);
    const auto r = probe_weights(2, seed + 2);
    grads.regression = {r[0], r[1]};
  }

  double operator()(const HeadOutputs& o) const {
    return dot(grads.action, o.action_logits) + dot(grads.tiou, o.tiou_logits) +
           grads.regression[0] * o.regression.d_loc + grads.regression[1] * o.regression.d_len;
  }
};

// ---- independent oracles ----

/// tIoU by enumerating frames.
inline double enumerated_tiou(const TemporalInterval& a, const TemporalInterval& b) {
  const int64_t lo = std::min(a.start(), b.start());
  const int64_t hi = std::max(a.end(), b.end());
  int64_t inter = 0, uni = 0;
  for (int64_t f = lo; f <= hi; ++f) {
    const bool in_a = f >= a.start() && f <= a.end();
    const bool in_b = f >= b.start() && f <= b.end();
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Greedy NMS written as the textbook O(n^2) loop over a fully sorted list.
inline std::vector<Detection> greedy_nms_oracle(std::vector<Detection> dets, double threshold) {
  std::sort(dets.begin(), dets.end(), ranks_before);
  std::vector<bool> removed(dets.size(), false);
  std::vector<Detection> kept;
  for (size_t i = 0; i < dets.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    for (size_t j = i + 1; j < dets.size(); ++j) {
      if (dets[j].video_id == dets[i].video_id && dets[j].class_id == dets[i].class_id &&
          tiou(dets[i].interval, dets[j].interval) > threshold) {
        removed[j] = true;
      }
    }
  }
  return kept;
}

/// AP from the staircase: for every recall level reached, take the best
/// precision at that recall or beyond, and sum precision x recall increment.
inline double staircase_ap_oracle(const std::vector<bool>& tp, int npos) {
  if (npos == 0) return 0.0;
  std::vector<double> precision, recall;
  int hits = 0;
  for (size_t k = 0; k < tp.size(); ++k) {
    hits += tp[k];
    precision.push_back(static_cast<double>(hits) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(hits) / npos);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t k = 0; k < tp.size(); ++k) {
    if (!tp[k]) continue;
    double best = 0.0;
    for (size_t m = k; m < tp.size(); ++m) best = std::max(best, precision[m]);
    ap += best * (recall[k] - prev_recall);
    prev_recall = recall[k];
  }
  return ap;
}

/// Brute-force single-class AP: rank by score, match each detection to the
/// unmatched gt of highest tIoU above the threshold, then integrate.
inline double brute_force_class_ap(std::vector<Detection> dets, const std::vector<LabeledInstance>& gts,
                                   double threshold) {
  std::sort(dets.begin(), dets.end(), ranks_before);
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> tp;
  for (const auto& d : dets) {
    int best = -1;
    double best_iou = threshold;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video_id != d.video_id) continue;
      const double iou = enumerated_tiou(d.interval, gts[g].interval);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) used[static_cast<size_t>(best)] = true;
    tp.push_back(best >= 0);
  }
  return staircase_ap_oracle(tp, static_cast<int>(gts.size()));
}

}  // namespace gemini::testing
