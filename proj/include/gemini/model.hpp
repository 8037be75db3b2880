#pragma once

#include <cstdint>
#include <vector>

#include "gemini/subnet1.hpp"
#include "gemini/subnet2.hpp"
#include "json.hpp"

namespace gemini {

struct ModelConfig {
  BackboneConfig backbone;
  Subnet2Config subnet2;
  uint64_t init_seed = 1;

  int num_classes() const { return subnet2.num_classes; }
  int feature_dim() const { return backbone.feature_dim; }
  /// Smallest augmented-proposal length the model accepts (3 alpha units).
  int min_units() const { return 3 * subnet2.alpha; }
  void validate() const;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const Subnet2Config& c);
void from_json(const nlohmann::json& j, Subnet2Config& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// FNV-1a 64 over the compact JSON form of the model config.
uint64_t config_hash(const ModelConfig& config);

/// Per-unit inputs of one augmented proposal; which member is used depends on
/// the backbone mode.
struct ProposalInput {
  std::vector<UnitFeaturePair> features;
  std::vector<PixelUnit> pixels;
};

struct ModelOutputs {
  HeadOutputs principal;
  HeadOutputs auxiliary;
};

/// Subnet I and Subnet II wired together.
class GeminiModel {
 public:
  explicit GeminiModel(const ModelConfig& config);

  /// Re-draws every parameter from `config().init_seed`.
  void init();

  const ModelConfig& config() const { return config_; }
  Subnet1& subnet1() { return subnet1_; }
  const Subnet1& subnet1() const { return subnet1_; }
  Subnet2& subnet2() { return subnet2_; }
  const Subnet2& subnet2() const { return subnet2_; }

  ParameterList subnet1_parameters();
  ParameterList subnet2_parameters();
  ParameterList parameters();

  struct Cache {
    ProposalFeatureMaps maps;
    std::vector<std::pair<Backbone::Cache, Backbone::Cache>> backbone;
    AuxiliaryHeads::Cache aux;
    Subnet2::Cache principal;
  };

  ProposalFeatureMaps feature_maps(const AugmentedProposal& proposal, const ProposalInput& input,
                                   Cache* cache = nullptr) const;

  /// Evaluates the requested head sets. Outputs not requested are left empty.
  ModelOutputs forward(const AugmentedProposal& proposal, const ProposalInput& input,
                       bool want_principal, bool want_auxiliary, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients. Null gradient pointers skip that head
  /// set. With `into_subnet1` unset the principal gradient stops at the
  /// feature maps.
  void backward(const Cache& cache, const HeadGradients* principal, const HeadGradients* auxiliary,
                bool into_subnet1);

 private:
  ModelConfig config_;
  Subnet1 subnet1_;
  Subnet2 subnet2_;
};

}  // namespace gemini
