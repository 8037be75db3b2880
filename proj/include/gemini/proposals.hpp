#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gemini/timeline.hpp"

namespace gemini {

/// One actionness score per unit, each in [0, 1].
class ActionnessTrack {
 public:
  explicit ActionnessTrack(std::vector<double> scores);
  const std::vector<double>& scores() const { return scores_; }
  size_t size() const { return scores_.size(); }

 private:
  std::vector<double> scores_;
};

struct GroupingOptions {
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int merge_gap = 1;
};

/// Inclusive 1-based unit ranges, one per grouped run, deduplicated and sorted.
std::vector<std::pair<int64_t, int64_t>> group_units(const ActionnessTrack& track,
                                                     const std::vector<double>& thresholds,
                                                     int merge_gap);

/// Temporal actionness grouping: threshold runs of high-actionness units,
/// merged across short gaps, unioned over all thresholds, returned in frames.
std::vector<TemporalInterval> actionness_grouping(const ActionnessTrack& track,
                                                  const std::vector<double>& thresholds,
                                                  int merge_gap, int64_t unit_length);

struct GroundTruth {
  TemporalInterval interval;
  int class_id;  // 1..K
};

enum class ProposalKind { kPositive = 0, kConfusing = 1, kBackground = 2 };

std::string to_string(ProposalKind kind);

struct LabeledProposal {
  AugmentedProposal proposal;
  ProposalKind kind;
  std::optional<int> matched_class;
  double best_tiou = 0.0;
  // Ground truth with the highest tIoU; absent only when best_tiou == 0.
  std::optional<TemporalInterval> matched_gt;
  // Opaque caller tag, e.g. the index of the source video.
  int64_t source = 0;
};

struct LabelThresholds {
  double positive = 0.7;
  double background_ceiling = 0.1;
};

std::vector<LabeledProposal> label_proposals(const std::vector<AugmentedProposal>& proposals,
                                             const std::vector<GroundTruth>& ground_truths,
                                             const LabelThresholds& thresholds = {});

struct MiniBatch {
  std::vector<LabeledProposal> members;
  // positive, confusing, background
  std::array<int, 3> counts{};
};

/// Draws batch_size/8 positives, 6*batch_size/8 confusing and batch_size/8
/// background proposals. Each kind is drawn without replacement when the pool
/// holds enough of it, with replacement otherwise.
MiniBatch sample_minibatch(const std::vector<LabeledProposal>& pool, int batch_size,
                           std::mt19937_64& rng);

/// Index-only variant of sample_minibatch over a pool already split by kind.
std::vector<size_t> sample_minibatch_indices(const std::array<std::vector<size_t>, 3>& by_kind,
                                             int batch_size, std::mt19937_64& rng);

}  // namespace gemini
