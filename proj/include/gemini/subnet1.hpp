#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gemini/heads.hpp"
#include "gemini/layers.hpp"
#include "gemini/timeline.hpp"

namespace gemini {

enum class BackboneMode { kPixel, kFeature };

/// Stand-in for the two-stream unit encoders: a strided conv stack, global
/// average pooling and a linear map to the feature dimension.
struct BackboneConfig {
  BackboneMode mode = BackboneMode::kFeature;
  int feature_dim = 64;
  std::vector<int> stage_widths = {8, 16};
  int height = 16;
  int width = 16;
  int unit_length = 8;

  void validate() const;
};

/// One stream's encoder. Input is a CHW tensor; output a feature_dim vector.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const std::string& name, int in_channels, const BackboneConfig& config);

  void init(std::mt19937_64& rng);

  struct Cache {
    std::vector<Tensor> inputs;  // input of every conv stage
    Tensor last;                 // output of the final conv stage (post ReLU)
    std::vector<double> pooled;
  };

  std::vector<double> forward(const Tensor& x, Cache* cache = nullptr) const;
  void backward(const Cache& cache, std::span<const double> dy);

  int in_channels() const { return in_channels_; }

  void collect(ParameterList& out);

 private:
  int in_channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<Conv2d> convs_;
  Linear project_;
};

/// RGB image (3, H, W).
using RgbFrame = Tensor;

/// Flow stack (2 n_u, H, W): planes alternate horizontal / vertical per frame pair.
class FlowStack {
 public:
  FlowStack(Tensor planes, int unit_length);
  const Tensor& planes() const { return planes_; }

 private:
  Tensor planes_;
};

std::vector<double> extract_spatial_feature(const RgbFrame& frame, const Backbone& spatial,
                                            Backbone::Cache* cache = nullptr);
std::vector<double> extract_temporal_feature(const FlowStack& stack, const Backbone& temporal,
                                             Backbone::Cache* cache = nullptr);

/// Unit-level features of one unit, both streams.
struct UnitFeaturePair {
  std::vector<double> spatial;
  std::vector<double> temporal;
};

struct PixelUnit {
  RgbFrame frame;
  Tensor flow;  // (2 n_u, H, W)
};

/// V^s and V^t of an augmented proposal, each stored (D, M) with column j the
/// feature of the proposal's j-th unit.
struct ProposalFeatureMaps {
  Tensor spatial;
  Tensor temporal;

  int feature_dim() const { return spatial.dim(0); }
  int units() const { return spatial.dim(1); }
};

/// Column j of a (D, M) map.
std::vector<double> column(const Tensor& map, int j);

/// Passthrough: copies the supplied unit features into the maps unchanged.
ProposalFeatureMaps build_feature_maps(const AugmentedProposal& proposal,
                                       std::span<const UnitFeaturePair> units);

/// Pixel mode: runs both backbones on every unit. When `caches` is given it
/// receives one (spatial, temporal) cache pair per unit for backpropagation.
ProposalFeatureMaps build_feature_maps(const AugmentedProposal& proposal,
                                       std::span<const PixelUnit> units, const Backbone& spatial,
                                       const Backbone& temporal,
                                       std::vector<std::pair<Backbone::Cache, Backbone::Cache>>* caches = nullptr);

/// Column boundaries [0, a), [a, b), [b, M) of the before/during/after thirds.
/// The outer thirds get floor(M/3) columns; the middle third takes the slack.
std::pair<int, int> thirds_bounds(int m);

/// Auxiliary supervision on top of the Subnet I feature maps.
class AuxiliaryHeads {
 public:
  AuxiliaryHeads() = default;
  AuxiliaryHeads(const std::string& name, int feature_dim, int num_classes);

  void init(std::mt19937_64& rng);

  struct Cache {
    int units = 0;
    std::vector<double> action_in;   // D
    std::vector<double> context_in;  // 3D
  };

  HeadOutputs forward(const ProposalFeatureMaps& maps, Cache* cache = nullptr) const;
  /// Returns dL/dV^s and dL/dV^t.
  std::pair<Tensor, Tensor> backward(const Cache& cache, const HeadGradients& grads);

  void collect(ParameterList& out) { heads_.collect(out); }

  PredictionHeads& heads() { return heads_; }

 private:
  int feature_dim_ = 0;
  PredictionHeads heads_;
};

/// Everything upstream of Subnet II: the two backbones (pixel mode only) and
/// the auxiliary heads.
class Subnet1 {
 public:
  Subnet1() = default;
  Subnet1(const BackboneConfig& config, int num_classes);

  void init(std::mt19937_64& rng);

  const BackboneConfig& config() const { return config_; }
  bool pixel_mode() const { return config_.mode == BackboneMode::kPixel; }

  Backbone& spatial() { return spatial_; }
  const Backbone& spatial() const { return spatial_; }
  Backbone& temporal() { return temporal_; }
  const Backbone& temporal() const { return temporal_; }
  AuxiliaryHeads& aux() { return aux_; }
  const AuxiliaryHeads& aux() const { return aux_; }

  void collect(ParameterList& out);

 private:
  BackboneConfig config_;
  Backbone spatial_;
  Backbone temporal_;
  AuxiliaryHeads aux_;
};

}  // namespace gemini
