#pragma once

#include <cstdint>

#include "gemini/dataset.hpp"
#include "json.hpp"

namespace gemini {

/// Synthetic videos with planted action instances.
struct SyntheticConfig {
  uint64_t seed = 7;
  int num_train = 200;
  int num_test = 50;
  int64_t frames_per_video = 1000;
  int unit_length = 8;
  double fps = 25.0;
  int num_classes = 5;
  int min_instances = 1;
  int max_instances = 3;
  int64_t min_duration = 80;  // frames
  int64_t max_duration = 160;
  int64_t min_separation = 24;  // background frames between instances
  // Keep every instance's tripled context span inside the video.
  bool context_margin = true;
  BackboneMode mode = BackboneMode::kFeature;
  int feature_dim = 32;
  double noise = 0.05;
  int height = 16;
  int width = 16;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

/// Per-stream unit patterns, (K+1, D); row 0 is background, row c is class c.
struct ClassPatterns {
  Tensor spatial;
  Tensor temporal;
};

ClassPatterns synthetic_patterns(const SyntheticConfig& config);

/// Videos 0..num_train-1 form the "train" split, the rest "test". Feature
/// values are rounded to 32-bit floats so the in-memory dataset matches its
/// serialized form exactly.
Dataset generate_synthetic_dataset(const SyntheticConfig& config);

}  // namespace gemini
