#include "gemini/config.hpp"

#include "gemini/error.hpp"

namespace gemini {

void RunConfig::validate() const {
  data.validate();
  model.validate();
  training.validate();
  if (data.mode != model.backbone.mode) throw ConfigError("dataset mode and backbone mode differ");
  if (data.feature_dim != model.feature_dim()) throw ConfigError("dataset and model feature_dim differ");
  if (data.num_classes != model.num_classes()) throw ConfigError("dataset and model class counts differ");
  if (data.unit_length != model.backbone.unit_length) throw ConfigError("dataset and model unit_length differ");
  if (proposals.min_units < 0) throw ConfigError("min_units must be non-negative");
  if (proposals.min_units > 0 && proposals.min_units < model.min_units()) {
    throw ConfigError("min_units " + std::to_string(proposals.min_units) + " is below 3*alpha = " +
                      std::to_string(model.min_units()));
  }
  if (!(proposals.labels.background_ceiling >= 0.0 &&
        proposals.labels.background_ceiling < proposals.labels.positive && proposals.labels.positive <= 1.0)) {
    throw ConfigError("label thresholds need 0 <= background < positive <= 1");
  }
  if (proposals.grouping.thresholds.empty()) throw ConfigError("at least one grouping threshold is required");
  for (double t : proposals.grouping.thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("grouping thresholds must lie in (0, 1)");
  }
  if (proposals.grouping.merge_gap < 0) throw ConfigError("merge_gap must be non-negative");
  if (!(inference.nms_threshold >= 0.0 && inference.nms_threshold <= 1.0)) {
    throw ConfigError("NMS threshold must lie in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const InferenceConfig& c) {
  j = nlohmann::json{{"nms", c.nms_threshold},
                     {"refine", c.refine},
                     {"eval_thresholds", c.eval_thresholds},
                     {"strict_matching", c.strict_matching}};
}

void from_json(const nlohmann::json& j, InferenceConfig& c) {
  c.nms_threshold = j.at("nms").get<double>();
  c.refine = j.at("refine").get<bool>();
  c.eval_thresholds = j.at("eval_thresholds").get<std::vector<double>>();
  c.strict_matching = j.at("strict_matching").get<bool>();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"preset", c.preset},       {"data", c.data},
                     {"model", c.model},         {"proposals", c.proposals},
                     {"training", c.training},   {"inference", c.inference}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c.preset = j.at("preset").get<std::string>();
  c.data = j.at("data").get<SyntheticConfig>();
  c.model = j.at("model").get<ModelConfig>();
  c.proposals = j.at("proposals").get<ProposalConfig>();
  c.training = j.at("training").get<TrainingConfig>();
  c.inference = j.at("inference").get<InferenceConfig>();
}

namespace {

RunConfig tiny5() {
  RunConfig c;
  c.preset = "tiny5";
  c.data = SyntheticConfig{};
  c.model.backbone.mode = BackboneMode::kFeature;
  c.model.backbone.feature_dim = c.data.feature_dim;
  c.model.backbone.unit_length = c.data.unit_length;
  c.model.subnet2.feature_dim = c.data.feature_dim;
  c.model.subnet2.num_classes = c.data.num_classes;
  c.model.subnet2.alpha = 3;
  c.model.subnet2.recode_dim = 17;
  c.model.subnet2.capture = CaptureConfig::compact(8);
  // Long enough for alpha = 9, so sweep cells share one proposal filter.
  c.proposals.min_units = 27;
  return c;
}

RunConfig pixel_tiny() {
  RunConfig c;
  c.preset = "pixel-tiny";
  c.data.mode = BackboneMode::kPixel;
  c.data.num_train = 8;
  c.data.num_test = 4;
  c.data.num_classes = 3;
  c.data.unit_length = 4;
  c.data.frames_per_video = 192;
  c.data.min_instances = 1;
  c.data.max_instances = 2;
  c.data.min_duration = 24;
  c.data.max_duration = 40;
  c.data.min_separation = 8;
  c.data.feature_dim = 16;
  c.data.height = 16;
  c.data.width = 16;
  c.model.backbone.mode = BackboneMode::kPixel;
  c.model.backbone.feature_dim = 16;
  c.model.backbone.unit_length = 4;
  c.model.backbone.stage_widths = {4, 8};
  c.model.subnet2.feature_dim = 16;
  c.model.subnet2.num_classes = 3;
  c.model.subnet2.alpha = 1;
  c.model.subnet2.recode_dim = 9;
  c.model.subnet2.capture = CaptureConfig::compact(4);
  c.proposals.min_units = 3;
  c.training.batch_size = 8;
  c.training.step1 = {4, 0.01};
  c.training.step2 = {4, 0.01};
  c.training.step3 = {4, 0.003};
  return c;
}

}  // namespace

RunConfig preset_config(const std::string& name) {
  if (name == "tiny5") return tiny5();
  if (name == "pixel-tiny") return pixel_tiny();
  throw ConfigError("unknown preset " + name);
}

std::vector<std::string> preset_names() { return {"tiny5", "pixel-tiny"}; }

void set_subnet2_shape(RunConfig& config, int alpha, int n, PoolMethod method) {
  config.model.subnet2.alpha = alpha;
  config.model.subnet2.recode_dim = n;
  config.model.subnet2.pool = method;
}

}  // namespace gemini
