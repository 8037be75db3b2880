#pragma once

#include <array>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gemini/heads.hpp"
#include "gemini/layers.hpp"
#include "gemini/subnet1.hpp"
#include "json.hpp"

namespace gemini {

enum class PoolMethod { kAverage, kMax };

std::string to_string(PoolMethod method);
PoolMethod pool_method_from_string(const std::string& name);

/// 0-based half-open column ranges of the 3*alpha segments of an M-column map.
std::vector<std::pair<int, int>> segment_bounds(int units, int alpha);

/// Fixed-size pooled representation: 3*alpha vectors of dimension D, stored
/// (3*alpha, D). Rows [0, a) are before, [a, 2a) during, [2a, 3a) after.
struct PooledStages {
  int alpha = 0;
  Tensor vectors;
  // Max pooling only: source column of every (segment, dim) entry.
  std::vector<int> argmax;

  std::span<const double> row(int j) const {
    return vectors.values().subspan(static_cast<size_t>(j) * vectors.dim(1),
                                    static_cast<size_t>(vectors.dim(1)));
  }
};

PooledStages self_adaptive_pool(const Tensor& map, int alpha, PoolMethod method);

/// Scatters dL/dR back onto the (D, M) map.
Tensor self_adaptive_pool_backward(const PooledStages& pooled, const Tensor& d_vectors, int units,
                                   PoolMethod method);

/// Recoded stage maps, each (alpha, n).
struct RecodedStages {
  std::array<Tensor, 3> stages;
};

/// d_j = W_g r_j + b_g with one affine map per stage group g.
RecodedStages recode(const PooledStages& pooled, const std::array<const Linear*, 3>& maps);
/// Same map for all three groups.
RecodedStages recode(const PooledStages& pooled, const Linear& map);

struct CaptureStage {
  std::string name;
  int channels;
  int stride_h;
  int stride_w;
};

/// Layer plan of the capture module. All convolutions are 3x3 with padding 1;
/// each stage is an "_a" basic block carrying the stride and an "_b" block.
struct CaptureConfig {
  int conv1_channels = 32;
  int conv1_stride_h = 2;
  int conv1_stride_w = 2;
  std::vector<CaptureStage> stages = {
      {"conv2", 64, 2, 1}, {"conv3", 128, 2, 1}, {"conv4", 256, 2, 1}, {"conv5", 512, 2, 2}};
  PoolSpec pool{false, 3, 2, 2, 1};
  // Init scale of the second conv of every residual branch.
  double residual_gain = 0.5;

  /// The layer plan that reproduces the published output sizes at alpha=9, n=129.
  static CaptureConfig reference();
  /// Narrow variant for desk-scale training; ends in global average pooling.
  static CaptureConfig compact(int base_channels = 8);
};

void to_json(nlohmann::json& j, const CaptureConfig& c);
void from_json(const nlohmann::json& j, CaptureConfig& c);

using ShapeTrace = std::vector<std::pair<std::string, std::vector<int>>>;

/// ResNet basic block: relu(conv_b(relu(conv_a(x))) + shortcut(x)).
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(const std::string& name, int in_channels, int out_channels, int stride_h,
             int stride_w);

  void init(std::mt19937_64& rng, double residual_gain);

  struct Cache {
    Tensor input;
    Tensor hidden;  // relu(conv_a(x))
    Tensor output;  // block output (post ReLU)
  };

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& dy);
  std::pair<int, int> output_hw(int h, int w) const;

  void collect(ParameterList& out);

  const std::string& name() const { return name_; }
  int out_channels() const { return conv_b_.spec().out_channels; }
  Conv2d& conv_a() { return conv_a_; }
  Conv2d& conv_b() { return conv_b_; }

 private:
  std::string name_;
  Conv2d conv_a_;
  Conv2d conv_b_;
  bool has_shortcut_ = false;
  Conv2d shortcut_;
};

/// 2-D residual stack applied to a stage map viewed as a 1-channel image of
/// height n and width alpha.
class CaptureModule {
 public:
  CaptureModule() = default;
  CaptureModule(const std::string& name, const CaptureConfig& config);

  void init(std::mt19937_64& rng);

  struct Cache {
    Tensor image;
    Tensor stem;  // relu(conv1(image))
    std::vector<BasicBlock::Cache> blocks;
    std::vector<int> pool_input_shape;
  };

  /// Runs on an (alpha, n) stage map and returns the flattened pooled output.
  std::vector<double> forward(const Tensor& stage_map, Cache* cache = nullptr) const;
  /// Returns dL/d stage_map.
  Tensor backward(const Cache& cache, std::span<const double> dy);

  /// Output shape of every layer for an (alpha, n) stage map. Throws ShapeError
  /// naming the first layer whose window no longer fits.
  ShapeTrace shape_trace(int alpha, int n) const;
  int output_dim(int alpha, int n) const;

  void collect(ParameterList& out);

  Conv2d& conv1() { return conv1_; }
  std::vector<BasicBlock>& blocks() { return blocks_; }

 private:
  CaptureConfig config_;
  Conv2d conv1_;
  std::vector<BasicBlock> blocks_;
};

/// Stage map (alpha, n) -> 1-channel image (1, n, alpha).
Tensor stage_map_to_image(const Tensor& stage_map);

struct Subnet2Config {
  int feature_dim = 64;
  int num_classes = 5;
  int alpha = 9;
  int recode_dim = 129;
  PoolMethod pool = PoolMethod::kAverage;
  CaptureConfig capture = CaptureConfig::reference();
  bool share_streams = false;
};

/// Capture modules, recoders and heads of one stream.
class StreamNet {
 public:
  StreamNet() = default;
  StreamNet(const std::string& name, const Subnet2Config& config);

  void init(std::mt19937_64& rng);

  struct Cache {
    PooledStages pooled;
    RecodedStages recoded;
    std::array<CaptureModule::Cache, 3> captures;
    std::array<std::vector<double>, 3> features;  // f_b, f_d, f_a
    std::vector<double> context;                   // [f_b, f_d, f_a]
    int units = 0;
  };

  HeadOutputs forward(const Tensor& map, Cache* cache = nullptr) const;
  /// Returns dL/d map when `input_grad` is set, an empty tensor otherwise.
  Tensor backward(const Cache& cache, const HeadGradients& grads, bool input_grad);

  void collect(ParameterList& out);

  std::array<Linear, 3>& recoders() { return recoders_; }
  std::array<CaptureModule, 3>& captures() { return captures_; }
  PredictionHeads& heads() { return heads_; }

 private:
  Subnet2Config config_;
  std::array<Linear, 3> recoders_;
  std::array<CaptureModule, 3> captures_;
  PredictionHeads heads_;
};

/// f_d drives the action logits; [f_b, f_d, f_a] drives tIoU and regression.
HeadOutputs stage_heads(std::span<const double> f_before, std::span<const double> f_during,
                        std::span<const double> f_after, const PredictionHeads& heads);

class Subnet2 {
 public:
  Subnet2() = default;
  explicit Subnet2(const Subnet2Config& config);

  void init(std::mt19937_64& rng);

  const Subnet2Config& config() const { return config_; }

  struct Cache {
    StreamNet::Cache spatial;
    StreamNet::Cache temporal;
  };

  /// Equal-weight fusion of the spatial and temporal stream outputs.
  HeadOutputs forward(const ProposalFeatureMaps& maps, Cache* cache = nullptr) const;
  /// Returns (dL/dV^s, dL/dV^t) when `input_grad` is set.
  std::pair<Tensor, Tensor> backward(const Cache& cache, const HeadGradients& grads,
                                     bool input_grad);

  StreamNet& stream(int s) { return streams_[config_.share_streams ? 0 : static_cast<size_t>(s)]; }
  const StreamNet& stream(int s) const {
    return streams_[config_.share_streams ? 0 : static_cast<size_t>(s)];
  }

  void collect(ParameterList& out);

 private:
  Subnet2Config config_;
  std::vector<StreamNet> streams_;
};

}  // namespace gemini
