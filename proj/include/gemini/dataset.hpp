#pragma once

#include <string>
#include <vector>

#include "gemini/inference.hpp"
#include "gemini/proposals.hpp"
#include "gemini/subnet1.hpp"
#include "gemini/tensor.hpp"

namespace gemini {

struct Video {
  std::string id;
  std::string split;  // "train" or "test"
  int64_t frames = 0;
  double fps = 25.0;
  std::vector<GroundTruth> instances;
  std::vector<double> actionness;  // one score per unit

  // Feature mode: (units, D) per stream.
  Tensor spatial_features;
  Tensor temporal_features;

  // Pixel mode: (frames, 3, H, W) and (frames, 2, H, W). Flow plane k holds the
  // displacement from frame k to frame k+1.
  Tensor rgb;
  Tensor flow;
};

struct Dataset {
  BackboneMode mode = BackboneMode::kFeature;
  int unit_length = 8;
  int feature_dim = 32;
  int num_classes = 5;
  int height = 16;
  int width = 16;
  std::vector<Video> videos;

  int64_t unit_count(const Video& v) const { return v.frames / unit_length; }
  std::vector<const Video*> split(const std::string& name) const;
};

/// Per-unit features of units [first, last] (1-based) in feature mode.
std::vector<UnitFeaturePair> unit_features(const Dataset& data, const Video& video, int64_t first,
                                           int64_t last);

/// Pixel inputs of unit `unit` (1-based): the frame at `frame_offset` inside
/// the unit and the 2*n_u flow planes of the unit.
PixelUnit pixel_unit(const Dataset& data, const Video& video, int64_t unit, int frame_offset);

std::vector<LabeledInstance> ground_truth_records(const std::vector<const Video*>& videos);

}  // namespace gemini
