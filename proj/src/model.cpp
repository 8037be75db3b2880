#include "gemini/model.hpp"

#include <random>

#include "gemini/error.hpp"

namespace gemini {

void ModelConfig::validate() const {
  backbone.validate();
  if (backbone.feature_dim != subnet2.feature_dim) {
    throw ConfigError("Subnet I and Subnet II disagree on the feature dimension");
  }
  if (subnet2.num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (subnet2.alpha < 1) throw ConfigError("alpha must be >= 1");
  if (subnet2.recode_dim < 1) throw ConfigError("recode dimension n must be >= 1");
  // Fails with ShapeError when the capture stack does not fit the stage map.
  CaptureModule probe("probe", subnet2.capture);
  probe.shape_trace(subnet2.alpha, subnet2.recode_dim);
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"mode", c.mode == BackboneMode::kPixel ? "pixel" : "feature"},
                     {"feature_dim", c.feature_dim},
                     {"stage_widths", c.stage_widths},
                     {"resolution", {c.height, c.width}},
                     {"unit_length", c.unit_length}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "pixel" && mode != "feature") throw ConfigError("unknown backbone mode " + mode);
  c.mode = mode == "pixel" ? BackboneMode::kPixel : BackboneMode::kFeature;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  c.height = j.at("resolution").at(0).get<int>();
  c.width = j.at("resolution").at(1).get<int>();
  c.unit_length = j.at("unit_length").get<int>();
}

void to_json(nlohmann::json& j, const Subnet2Config& c) {
  j = nlohmann::json{{"feature_dim", c.feature_dim}, {"num_classes", c.num_classes},
                     {"alpha", c.alpha},             {"n", c.recode_dim},
                     {"pool", to_string(c.pool)},    {"capture", c.capture},
                     {"share_streams", c.share_streams}};
}

void from_json(const nlohmann::json& j, Subnet2Config& c) {
  c.feature_dim = j.at("feature_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.alpha = j.at("alpha").get<int>();
  c.recode_dim = j.at("n").get<int>();
  c.pool = pool_method_from_string(j.at("pool").get<std::string>());
  c.capture = j.at("capture").get<CaptureConfig>();
  c.share_streams = j.at("share_streams").get<bool>();
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"backbone", c.backbone}, {"subnet2", c.subnet2}, {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.backbone = j.at("backbone").get<BackboneConfig>();
  c.subnet2 = j.at("subnet2").get<Subnet2Config>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
}

uint64_t config_hash(const ModelConfig& config) {
  const std::string text = nlohmann::json(config).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

GeminiModel::GeminiModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  subnet1_ = Subnet1(config_.backbone, config_.num_classes());
  subnet2_ = Subnet2(config_.subnet2);
  init();
}

void GeminiModel::init() {
  std::mt19937_64 rng(config_.init_seed);
  subnet1_.init(rng);
  subnet2_.init(rng);
}

ParameterList GeminiModel::subnet1_parameters() {
  ParameterList out;
  subnet1_.collect(out);
  return out;
}

ParameterList GeminiModel::subnet2_parameters() {
  ParameterList out;
  subnet2_.collect(out);
  return out;
}

ParameterList GeminiModel::parameters() {
  ParameterList out = subnet1_parameters();
  subnet2_.collect(out);
  return out;
}

ProposalFeatureMaps GeminiModel::feature_maps(const AugmentedProposal& proposal,
                                              const ProposalInput& input, Cache* cache) const {
  if (subnet1_.pixel_mode()) {
    return build_feature_maps(proposal, input.pixels, subnet1_.spatial(), subnet1_.temporal(),
                              cache ? &cache->backbone : nullptr);
  }
  return build_feature_maps(proposal, input.features);
}

ModelOutputs GeminiModel::forward(const AugmentedProposal& proposal, const ProposalInput& input,
                                  bool want_principal, bool want_auxiliary, Cache* cache) const {
  ModelOutputs out;
  ProposalFeatureMaps local;
  ProposalFeatureMaps& maps = cache ? cache->maps : local;
  maps = feature_maps(proposal, input, cache);
  if (want_auxiliary) out.auxiliary = subnet1_.aux().forward(maps, cache ? &cache->aux : nullptr);
  if (want_principal) out.principal = subnet2_.forward(maps, cache ? &cache->principal : nullptr);
  return out;
}

void GeminiModel::backward(const Cache& cache, const HeadGradients* principal,
                           const HeadGradients* auxiliary, bool into_subnet1) {
  const bool pixel = subnet1_.pixel_mode();
  const int d = cache.maps.feature_dim();
  const int m = cache.maps.units();
  Tensor d_spatial({d, m});
  Tensor d_temporal({d, m});
  if (auxiliary) {
    auto [ds, dt] = subnet1_.aux().backward(cache.aux, *auxiliary);
    d_spatial = std::move(ds);
    d_temporal = std::move(dt);
  }
  if (principal) {
    const bool need_input = into_subnet1 && pixel;
    auto [ds, dt] = subnet2_.backward(cache.principal, *principal, need_input);
    if (need_input) {
      for (size_t k = 0; k < d_spatial.size(); ++k) {
        d_spatial[k] += ds[k];
        d_temporal[k] += dt[k];
      }
    }
  }
  if (!pixel || (!auxiliary && !into_subnet1)) return;
  for (int j = 0; j < m; ++j) {
    const auto gs = column(d_spatial, j);
    const auto gt = column(d_temporal, j);
    const auto& [cs, ct] = cache.backbone[static_cast<size_t>(j)];
    subnet1_.spatial().backward(cs, gs);
    subnet1_.temporal().backward(ct, gt);
  }
}

}  // namespace gemini
