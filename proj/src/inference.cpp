#include "gemini/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include "gemini/error.hpp"

namespace gemini {

double combine_scores(double action_score, double tiou_score) {
  return tiou_score * std::exp(action_score);
}

Detection Detection::make(std::string video_id, TemporalInterval interval, int class_id,
                          double action_score, double tiou_score) {
  return Detection{std::move(video_id), interval,   class_id,
                   action_score,        tiou_score, combine_scores(action_score, tiou_score)};
}

bool ranks_before(const Detection& a, const Detection& b) {
  return std::make_tuple(-a.combined_score, a.interval.start(), a.class_id, a.interval.end(),
                         -a.action_score, -a.tiou_score) <
         std::make_tuple(-b.combined_score, b.interval.start(), b.class_id, b.interval.end(),
                         -b.action_score, -b.tiou_score);
}

std::vector<size_t> temporal_nms_indices(std::span<const Detection> detections, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("NMS threshold must lie in [0,1]");
  std::map<std::pair<std::string, int>, std::vector<size_t>> groups;
  for (size_t i = 0; i < detections.size(); ++i) {
    groups[{detections[i].video_id, detections[i].class_id}].push_back(i);
  }
  std::vector<size_t> kept;
  for (auto& [key, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      return ranks_before(detections[a], detections[b]);
    });
    std::vector<size_t> chosen;
    for (size_t i : idx) {
      bool suppressed = false;
      for (size_t c : chosen) {
        if (tiou(detections[i].interval, detections[c].interval) > threshold) {
          suppressed = true;
          break;
        }
      }
      if (!suppressed) chosen.push_back(i);
    }
    kept.insert(kept.end(), chosen.begin(), chosen.end());
  }
  return kept;
}

std::vector<Detection> temporal_nms(std::span<const Detection> detections, double threshold) {
  std::vector<Detection> out;
  for (size_t i : temporal_nms_indices(detections, threshold)) out.push_back(detections[i]);
  return out;
}

std::vector<Detection> refine_boundaries(std::span<const Detection> detections,
                                         std::span<const OffsetPair> regressions,
                                         int64_t video_frames) {
  if (detections.size() != regressions.size()) {
    throw ShapeError("refine_boundaries: one regression per detection required");
  }
  std::vector<Detection> out(detections.begin(), detections.end());
  for (size_t i = 0; i < out.size(); ++i) {
    try {
      TemporalInterval refined = decode_offsets(out[i].interval, regressions[i]);
      if (video_frames > 0) {
        if (refined.start() > video_frames) throw DegenerateDetectionError("refined past video end");
        refined = TemporalInterval(refined.start(), std::min(refined.end(), video_frames));
      }
      out[i].interval = refined;
    } catch (const DegenerateDetectionError&) {
      out[i].refine_fallback = true;
    }
  }
  return out;
}

double average_precision(const std::vector<bool>& is_true_positive, int num_positives) {
  if (num_positives <= 0) return 0.0;
  const size_t n = is_true_positive.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  int tp = 0;
  for (size_t i = 0; i < n; ++i) {
    if (is_true_positive[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / num_positives;
  }
  // Monotone envelope from the right, then integrate over recall steps.
  for (size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

std::vector<double> average_map_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

double class_ap(const std::vector<const Detection*>& dets,
                const std::vector<const LabeledInstance*>& gts, double threshold, bool strict) {
  std::map<std::string, std::vector<size_t>> gt_by_video;
  for (size_t g = 0; g < gts.size(); ++g) gt_by_video[gts[g]->video_id].push_back(g);
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> tp_flags;
  tp_flags.reserve(dets.size());
  for (const Detection* d : dets) {
    bool tp = false;
    auto it = gt_by_video.find(d->video_id);
    if (it != gt_by_video.end()) {
      double best = -1.0;
      size_t best_g = 0;
      for (size_t g : it->second) {
        if (used[g]) continue;
        const double v = tiou(d->interval, gts[g]->interval);
        const bool ok = strict ? v > threshold : v >= threshold;
        if (ok && v > best) {
          best = v;
          best_g = g;
        }
      }
      if (best >= 0.0) {
        used[best_g] = true;
        tp = true;
      }
    }
    tp_flags.push_back(tp);
  }
  return average_precision(tp_flags, static_cast<int>(gts.size()));
}

}  // namespace

EvaluationResult evaluate(std::span<const Detection> detections,
                          std::span<const LabeledInstance> ground_truths,
                          const std::vector<double>& thresholds, const EvaluationOptions& options) {
  EvaluationResult result;
  result.thresholds = thresholds;
  std::map<int, std::vector<const Detection*>> det_by_class;
  std::map<int, std::vector<const LabeledInstance*>> gt_by_class;
  for (const auto& d : detections) det_by_class[d.class_id].push_back(&d);
  for (const auto& g : ground_truths) gt_by_class[g.class_id].push_back(&g);
  for (auto& [cls, dets] : det_by_class) {
    std::sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) {
      if (a->combined_score != b->combined_score) return a->combined_score > b->combined_score;
      if (a->video_id != b->video_id) return a->video_id < b->video_id;
      return ranks_before(*a, *b);
    });
    if (!gt_by_class.count(cls)) result.excluded_classes.push_back(cls);
  }

  auto map_at = [&](double thr) {
    if (gt_by_class.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [cls, gts] : gt_by_class) {
      const auto it = det_by_class.find(cls);
      sum += it == det_by_class.end() ? 0.0 : class_ap(it->second, gts, thr, options.strict);
    }
    return sum / static_cast<double>(gt_by_class.size());
  };

  for (const auto& [cls, gts] : gt_by_class) {
    auto& aps = result.class_ap[cls];
    const auto it = det_by_class.find(cls);
    for (double thr : thresholds) {
      aps.push_back(it == det_by_class.end() ? 0.0 : class_ap(it->second, gts, thr, options.strict));
    }
  }
  for (size_t t = 0; t < thresholds.size(); ++t) {
    if (gt_by_class.empty()) {
      result.map.push_back(0.0);
      continue;
    }
    double sum = 0.0;
    for (const auto& [cls, aps] : result.class_ap) sum += aps[t];
    result.map.push_back(sum / static_cast<double>(result.class_ap.size()));
  }
  double avg = 0.0;
  const auto avg_thr = average_map_thresholds();
  for (double thr : avg_thr) avg += map_at(thr);
  result.average_map = avg / static_cast<double>(avg_thr.size());
  return result;
}

}  // namespace gemini
