#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gemini/timeline.hpp"

namespace gemini {

/// s = i * exp(a).
double combine_scores(double action_score, double tiou_score);

struct Detection {
  std::string video_id;
  TemporalInterval interval;
  int class_id = 1;
  double action_score = 0.0;
  double tiou_score = 0.0;
  double combined_score = 0.0;
  // Set when refinement produced a degenerate interval and the raw one was kept.
  bool refine_fallback = false;

  static Detection make(std::string video_id, TemporalInterval interval, int class_id,
                        double action_score, double tiou_score);
};

/// Strict total order used everywhere detections are ranked: combined score
/// descending, then earlier start, lower class, earlier end, then the raw scores.
bool ranks_before(const Detection& a, const Detection& b);

/// Greedy NMS within every (video, class) group. Returns the indices of kept
/// detections, grouped by (video, class) and in selection order within a group.
std::vector<size_t> temporal_nms_indices(std::span<const Detection> detections, double threshold);

std::vector<Detection> temporal_nms(std::span<const Detection> detections, double threshold);

/// Applies the inverse offset transform to every detection. A degenerate
/// decode keeps the raw interval and sets refine_fallback. When video_frames
/// is positive the refined interval is clipped to [1, video_frames].
std::vector<Detection> refine_boundaries(std::span<const Detection> detections,
                                         std::span<const OffsetPair> regressions,
                                         int64_t video_frames = 0);

struct LabeledInstance {
  std::string video_id;
  int class_id;
  TemporalInterval interval;
};

struct EvaluationOptions {
  // tIoU must exceed the threshold; set false to accept equality.
  bool strict = true;
};

struct EvaluationResult {
  std::vector<double> thresholds;
  std::map<int, std::vector<double>> class_ap;  // class -> AP per threshold
  std::vector<double> map;                      // per threshold
  double average_map = 0.0;                     // mean mAP over 0.50:0.05:0.95
  std::vector<int> excluded_classes;            // classes with detections but no ground truth
};

/// Average precision from ranked true/false-positive flags: area under the
/// monotone precision envelope of the precision-recall curve.
double average_precision(const std::vector<bool>& is_true_positive, int num_positives);

/// Thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> average_map_thresholds();

EvaluationResult evaluate(std::span<const Detection> detections,
                          std::span<const LabeledInstance> ground_truths,
                          const std::vector<double>& thresholds,
                          const EvaluationOptions& options = {});

}  // namespace gemini
