#pragma once

#include <string>
#include <vector>

#include "gemini/model.hpp"
#include "gemini/synthetic.hpp"
#include "gemini/training.hpp"
#include "json.hpp"

namespace gemini {

struct InferenceConfig {
  double nms_threshold = 0.2;
  bool refine = true;
  std::vector<double> eval_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  bool strict_matching = true;
};

/// Everything a run depends on.
struct RunConfig {
  std::string preset;
  SyntheticConfig data;
  ModelConfig model;
  ProposalConfig proposals;
  TrainingConfig training;
  InferenceConfig inference;

  /// Checks each part and their mutual consistency.
  void validate() const;
};

void to_json(nlohmann::json& j, const InferenceConfig& c);
void from_json(const nlohmann::json& j, InferenceConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// "tiny5": five classes, feature mode, low noise. "pixel-tiny": a few small
/// rendered videos that exercise the pixel backbones.
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Sets alpha, n and the pooling method, keeping the rest of the config.
void set_subnet2_shape(RunConfig& config, int alpha, int n, PoolMethod method);

}  // namespace gemini
