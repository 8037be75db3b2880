#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "gemini/heads.hpp"
#include "gemini/proposals.hpp"
#include "gemini/tensor.hpp"
#include "gemini/timeline.hpp"

namespace gemini {

struct LossWeights {
  double lambda_tiou = 1.0;
  double mu_reg = 1.0;
  double aux_weight = 1.0;

  void validate() const;
};

/// kSoftmax: one softmax over the K tIoU logits, label = matched class.
/// kSigmoid: K independent binary classifiers; the matched class is the
/// positive target for positive proposals, every class is negative for
/// confusing ones.
enum class TiouMode { kSoftmax, kSigmoid };

/// Mean softmax cross-entropy. `logits` and one-hot `labels` are (N, K+1).
/// When `grad` is given it receives dL/dlogits.
double action_loss(const Tensor& logits, const Tensor& labels, Tensor* grad = nullptr);

/// Number of samples the hard-example rule keeps: ceil(n * keep_fraction).
int ohem_keep_count(int n, double keep_fraction);

struct OhemResult {
  double loss = 0.0;
  std::vector<int> selected;  // sorted by descending per-sample loss
  std::vector<double> per_sample;
};

/// tIoU classification loss averaged over the hardest samples only.
/// Ties in per-sample loss go to the lower index.
OhemResult tiou_loss_with_ohem(const Tensor& logits, const Tensor& labels, double keep_fraction,
                               Tensor* grad = nullptr, TiouMode mode = TiouMode::kSoftmax);

double smooth_l1(double x);
double smooth_l1_derivative(double x);

/// Mean over samples of SL1(d_loc' - d_loc) + SL1(d_len' - d_len).
double regression_loss(std::span<const OffsetPair> pred, std::span<const OffsetPair> target,
                       std::vector<std::array<double, 2>>* grad = nullptr);

/// Supervision attached to one proposal of a batch.
struct SampleTarget {
  ProposalKind kind = ProposalKind::kBackground;
  int class_id = 0;  // 1..K for positive/confusing, 0 for background
  OffsetPair offsets;
};

struct LossOptions {
  LossWeights weights;
  double ohem_keep = 1.0 / 6.0;
  TiouMode tiou_mode = TiouMode::kSoftmax;
};

/// L = L_als + lambda * L_tIoU + mu * L_reg over one set of head outputs.
struct LossBreakdown {
  double als = 0.0;
  double tiou = 0.0;
  double reg = 0.0;
  double total = 0.0;
  // Set when no sample of the batch was eligible for that term.
  bool als_empty = false;
  bool tiou_empty = false;
  bool reg_empty = false;
  std::vector<int> selected_hard;  // batch indices kept by the hard-example rule
};

/// Routes each sample to the terms it is eligible for: positives and
/// background to the action loss, positives and confusing to the tIoU loss,
/// positives to the regression loss. `grads`, when given, receives one
/// HeadGradients per sample for the weighted total.
LossBreakdown multitask_loss(std::span<const HeadOutputs> outputs,
                             std::span<const SampleTarget> targets, const LossOptions& options,
                             std::vector<HeadGradients>* grads = nullptr);

struct BatchLossReport {
  std::optional<LossBreakdown> principal;
  std::optional<LossBreakdown> auxiliary;
  double total = 0.0;
  std::vector<int> selected_hard_indices;
};

/// Principal loss on the Subnet II heads, plus aux_weight times the same
/// objective on the auxiliary heads when `aux_outputs` is supplied.
BatchLossReport principal_loss(std::span<const HeadOutputs> outputs,
                               std::span<const SampleTarget> targets, const LossOptions& options,
                               std::optional<std::span<const HeadOutputs>> aux_outputs = std::nullopt,
                               std::vector<HeadGradients>* grads = nullptr,
                               std::vector<HeadGradients>* aux_grads = nullptr);

}  // namespace gemini
