#include "gemini/subnet2.hpp"

#include <cmath>

#include "gemini/error.hpp"

namespace gemini {

std::string to_string(PoolMethod method) {
  return method == PoolMethod::kAverage ? "average" : "max";
}

PoolMethod pool_method_from_string(const std::string& name) {
  if (name == "average" || name == "avg") return PoolMethod::kAverage;
  if (name == "max") return PoolMethod::kMax;
  throw ConfigError("unknown pooling method '" + name + "'");
}

std::vector<std::pair<int, int>> segment_bounds(int units, int alpha) {
  if (alpha < 1) throw ConfigError("alpha must be >= 1");
  const int segments = 3 * alpha;
  if (units < segments) {
    throw ProposalTooShortError("self-adaptive pooling needs M >= 3*alpha = " +
                                std::to_string(segments) + " units, got " + std::to_string(units));
  }
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(segments));
  for (int j = 1; j <= segments; ++j) {
    // 1-based columns floor((j-1)M/3a)+1 .. floor(jM/3a) as a 0-based half-open range.
    const int lo = static_cast<int>((static_cast<int64_t>(j - 1) * units) / segments);
    const int hi = static_cast<int>((static_cast<int64_t>(j) * units) / segments);
    out.emplace_back(lo, hi);
  }
  return out;
}

PooledStages self_adaptive_pool(const Tensor& map, int alpha, PoolMethod method) {
  const int d_n = map.dim(0);
  const int m = map.dim(1);
  const auto bounds = segment_bounds(m, alpha);
  PooledStages out{alpha, Tensor({3 * alpha, d_n}), {}};
  if (method == PoolMethod::kMax) out.argmax.assign(static_cast<size_t>(3 * alpha * d_n), 0);
  for (int s = 0; s < 3 * alpha; ++s) {
    const auto [lo, hi] = bounds[static_cast<size_t>(s)];
    for (int d = 0; d < d_n; ++d) {
      if (method == PoolMethod::kAverage) {
        double acc = 0.0;
        for (int j = lo; j < hi; ++j) acc += map.at(d, j);
        out.vectors.at(s, d) = acc / (hi - lo);
      } else {
        int best = lo;
        for (int j = lo + 1; j < hi; ++j) {
          if (map.at(d, j) > map.at(d, best)) best = j;
        }
        out.vectors.at(s, d) = map.at(d, best);
        out.argmax[static_cast<size_t>(s * d_n + d)] = best;
      }
    }
  }
  return out;
}

Tensor self_adaptive_pool_backward(const PooledStages& pooled, const Tensor& d_vectors, int units,
                                   PoolMethod method) {
  const int d_n = pooled.vectors.dim(1);
  const auto bounds = segment_bounds(units, pooled.alpha);
  Tensor dmap({d_n, units});
  for (int s = 0; s < 3 * pooled.alpha; ++s) {
    const auto [lo, hi] = bounds[static_cast<size_t>(s)];
    for (int d = 0; d < d_n; ++d) {
      const double g = d_vectors.at(s, d);
      if (method == PoolMethod::kAverage) {
        const double share = g / (hi - lo);
        for (int j = lo; j < hi; ++j) dmap.at(d, j) += share;
      } else {
        dmap.at(d, pooled.argmax[static_cast<size_t>(s * d_n + d)]) += g;
      }
    }
  }
  return dmap;
}

RecodedStages recode(const PooledStages& pooled, const std::array<const Linear*, 3>& maps) {
  const int alpha = pooled.alpha;
  if (pooled.vectors.dim(0) != 3 * alpha) throw ShapeError("pooled stages must hold 3*alpha rows");
  RecodedStages out;
  for (int g = 0; g < 3; ++g) {
    const Linear& fc = *maps[static_cast<size_t>(g)];
    if (fc.in_features() != pooled.vectors.dim(1)) {
      throw ShapeError("recoder expects dimension " + std::to_string(fc.in_features()) +
                       ", pooled vectors have " + std::to_string(pooled.vectors.dim(1)));
    }
    Tensor stage({alpha, fc.out_features()});
    for (int j = 0; j < alpha; ++j) {
      const auto d = fc.forward(pooled.row(g * alpha + j));
      std::copy(d.begin(), d.end(), stage.data() + static_cast<size_t>(j) * fc.out_features());
    }
    out.stages[static_cast<size_t>(g)] = std::move(stage);
  }
  return out;
}

RecodedStages recode(const PooledStages& pooled, const Linear& map) {
  return recode(pooled, {&map, &map, &map});
}

CaptureConfig CaptureConfig::reference() { return CaptureConfig{}; }

CaptureConfig CaptureConfig::compact(int base) {
  CaptureConfig c;
  c.conv1_channels = base;
  c.stages = {{"conv2", base, 2, 1},
              {"conv3", 2 * base, 2, 1},
              {"conv4", 2 * base, 2, 1},
              {"conv5", 4 * base, 2, 2}};
  c.pool = PoolSpec{true, 1, 1, 1, 1};
  return c;
}

void to_json(nlohmann::json& j, const CaptureConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"name", s.name}, {"channels", s.channels}, {"stride", {s.stride_h, s.stride_w}}});
  }
  j = nlohmann::json{{"conv1", {{"channels", c.conv1_channels},
                                {"stride", {c.conv1_stride_h, c.conv1_stride_w}}}},
                     {"stages", stages},
                     {"pool", {{"global", c.pool.global},
                               {"kernel", {c.pool.kernel_h, c.pool.kernel_w}},
                               {"stride", {c.pool.stride_h, c.pool.stride_w}}}},
                     {"residual_gain", c.residual_gain}};
}

void from_json(const nlohmann::json& j, CaptureConfig& c) {
  const auto& conv1 = j.at("conv1");
  c.conv1_channels = conv1.at("channels").get<int>();
  c.conv1_stride_h = conv1.at("stride").at(0).get<int>();
  c.conv1_stride_w = conv1.at("stride").at(1).get<int>();
  c.stages.clear();
  for (const auto& s : j.at("stages")) {
    c.stages.push_back(CaptureStage{s.at("name").get<std::string>(), s.at("channels").get<int>(),
                                    s.at("stride").at(0).get<int>(),
                                    s.at("stride").at(1).get<int>()});
  }
  const auto& pool = j.at("pool");
  c.pool.global = pool.at("global").get<bool>();
  c.pool.kernel_h = pool.at("kernel").at(0).get<int>();
  c.pool.kernel_w = pool.at("kernel").at(1).get<int>();
  c.pool.stride_h = pool.at("stride").at(0).get<int>();
  c.pool.stride_w = pool.at("stride").at(1).get<int>();
  c.residual_gain = j.value("residual_gain", 0.5);
}

BasicBlock::BasicBlock(const std::string& name, int in_channels, int out_channels, int stride_h,
                       int stride_w)
    : name_(name),
      conv_a_(name + ".conv_a", Conv2dSpec{in_channels, out_channels, 3, 3, stride_h, stride_w, 1, 1}),
      conv_b_(name + ".conv_b", Conv2dSpec{out_channels, out_channels, 3, 3, 1, 1, 1, 1}),
      has_shortcut_(in_channels != out_channels || stride_h != 1 || stride_w != 1) {
  if (has_shortcut_) {
    shortcut_ = Conv2d(name + ".shortcut",
                       Conv2dSpec{in_channels, out_channels, 1, 1, stride_h, stride_w, 0, 0}, false);
  }
}

void BasicBlock::init(std::mt19937_64& rng, double residual_gain) {
  conv_a_.init(rng);
  conv_b_.init(rng, residual_gain);
  if (has_shortcut_) shortcut_.init(rng, std::sqrt(0.5));
}

std::pair<int, int> BasicBlock::output_hw(int h, int w) const {
  const auto [ah, aw] = conv_a_.output_hw(h, w, name_);
  return conv_b_.output_hw(ah, aw, name_);
}

Tensor BasicBlock::forward(const Tensor& x, Cache* cache) const {
  Tensor hidden = conv_a_.forward(x);
  relu_inplace(hidden);
  Tensor out = conv_b_.forward(hidden);
  if (has_shortcut_) {
    const Tensor sc = shortcut_.forward(x);
    for (size_t i = 0; i < out.size(); ++i) out[i] += sc[i];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  relu_inplace(out);
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
    cache->output = out;
  }
  return out;
}

Tensor BasicBlock::backward(const Cache& cache, const Tensor& dy) {
  Tensor dz = dy;
  relu_backward_inplace(dz, cache.output);
  Tensor dh = conv_b_.backward(cache.hidden, dz);
  relu_backward_inplace(dh, cache.hidden);
  Tensor dx = conv_a_.backward(cache.input, dh);
  if (has_shortcut_) {
    const Tensor dsc = shortcut_.backward(cache.input, dz);
    for (size_t i = 0; i < dx.size(); ++i) dx[i] += dsc[i];
  } else {
    for (size_t i = 0; i < dx.size(); ++i) dx[i] += dz[i];
  }
  return dx;
}

void BasicBlock::collect(ParameterList& out) {
  conv_a_.collect(out);
  conv_b_.collect(out);
  if (has_shortcut_) shortcut_.collect(out);
}

CaptureModule::CaptureModule(const std::string& name, const CaptureConfig& config)
    : config_(config),
      conv1_(name + ".conv1", Conv2dSpec{1, config.conv1_channels, 3, 3, config.conv1_stride_h,
                                         config.conv1_stride_w, 1, 1}) {
  int channels = config.conv1_channels;
  for (const auto& stage : config.stages) {
    blocks_.emplace_back(name + "." + stage.name + "_a", channels, stage.channels, stage.stride_h,
                         stage.stride_w);
    blocks_.emplace_back(name + "." + stage.name + "_b", stage.channels, stage.channels, 1, 1);
    channels = stage.channels;
  }
}

void CaptureModule::init(std::mt19937_64& rng) {
  conv1_.init(rng);
  for (auto& block : blocks_) block.init(rng, config_.residual_gain);
}

Tensor stage_map_to_image(const Tensor& stage_map) {
  const int alpha = stage_map.dim(0);
  const int n = stage_map.dim(1);
  Tensor image({1, n, alpha});
  for (int j = 0; j < alpha; ++j) {
    for (int k = 0; k < n; ++k) image.at(0, k, j) = stage_map.at(j, k);
  }
  return image;
}

ShapeTrace CaptureModule::shape_trace(int alpha, int n) const {
  ShapeTrace trace;
  auto [h, w] = conv1_.output_hw(n, alpha, "conv1");
  trace.emplace_back("conv1", std::vector<int>{config_.conv1_channels, h, w});
  for (const auto& block : blocks_) {
    const std::string label = block.name().substr(block.name().rfind('.') + 1);
    std::tie(h, w) = block.output_hw(h, w);
    trace.emplace_back(label, std::vector<int>{block.out_channels(), h, w});
  }
  const int c = trace.back().second[0];
  PoolSpec pool = config_.pool;
  if (pool.global) pool = PoolSpec{false, h, w, 1, 1};
  const int ph = window_output_size(h, pool.kernel_h, pool.stride_h, 0);
  const int pw = window_output_size(w, pool.kernel_w, pool.stride_w, 0);
  if (ph < 1 || pw < 1) {
    throw ShapeError("shape underflow at layer avg_pool: input " + std::to_string(h) + "x" +
                     std::to_string(w) + " too small for window " + std::to_string(pool.kernel_h) +
                     "x" + std::to_string(pool.kernel_w));
  }
  trace.emplace_back("avg_pool", std::vector<int>{c, ph, pw});
  return trace;
}

int CaptureModule::output_dim(int alpha, int n) const {
  const auto trace = shape_trace(alpha, n);
  const auto& s = trace.back().second;
  return s[0] * s[1] * s[2];
}

std::vector<double> CaptureModule::forward(const Tensor& stage_map, Cache* cache) const {
  Tensor image = stage_map_to_image(stage_map);
  Tensor h = conv1_.forward(image);
  relu_inplace(h);
  if (cache) {
    cache->image = std::move(image);
    cache->stem = h;
    cache->blocks.assign(blocks_.size(), {});
  }
  for (size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i].forward(h, cache ? &cache->blocks[i] : nullptr);
  }
  if (cache) cache->pool_input_shape = h.shape();
  const Tensor pooled = avg_pool2d(h, config_.pool);
  return pooled.storage();
}

Tensor CaptureModule::backward(const Cache& cache, std::span<const double> dy) {
  const auto& in_shape = cache.pool_input_shape;
  PoolSpec pool = config_.pool;
  if (pool.global) pool = PoolSpec{false, in_shape[1], in_shape[2], 1, 1};
  const int ph = window_output_size(in_shape[1], pool.kernel_h, pool.stride_h, 0);
  const int pw = window_output_size(in_shape[2], pool.kernel_w, pool.stride_w, 0);
  Tensor dpool({in_shape[0], ph, pw});
  std::copy(dy.begin(), dy.end(), dpool.data());
  Tensor g = avg_pool2d_backward(in_shape, dpool, pool);
  for (size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(cache.blocks[i], g);
  relu_backward_inplace(g, cache.stem);
  const Tensor dimage = conv1_.backward(cache.image, g);
  const int n = dimage.dim(1);
  const int alpha = dimage.dim(2);
  Tensor dstage({alpha, n});
  for (int j = 0; j < alpha; ++j) {
    for (int k = 0; k < n; ++k) dstage.at(j, k) = dimage.at(0, k, j);
  }
  return dstage;
}

void CaptureModule::collect(ParameterList& out) {
  conv1_.collect(out);
  for (auto& block : blocks_) block.collect(out);
}

HeadOutputs stage_heads(std::span<const double> f_before, std::span<const double> f_during,
                        std::span<const double> f_after, const PredictionHeads& heads) {
  std::vector<double> context;
  context.reserve(f_before.size() + f_during.size() + f_after.size());
  context.insert(context.end(), f_before.begin(), f_before.end());
  context.insert(context.end(), f_during.begin(), f_during.end());
  context.insert(context.end(), f_after.begin(), f_after.end());
  return heads.forward(f_during, context);
}

namespace {

const char* kStageNames[3] = {"before", "during", "after"};

}  // namespace

StreamNet::StreamNet(const std::string& name, const Subnet2Config& config) : config_(config) {
  for (size_t g = 0; g < 3; ++g) {
    recoders_[g] = Linear(name + ".recode_" + kStageNames[g], config.feature_dim, config.recode_dim);
    captures_[g] = CaptureModule(name + ".capture_" + kStageNames[g], config.capture);
  }
  const int f = captures_[0].output_dim(config.alpha, config.recode_dim);
  heads_ = PredictionHeads(name + ".heads", f, 3 * f, config.num_classes);
}

void StreamNet::init(std::mt19937_64& rng) {
  for (size_t g = 0; g < 3; ++g) {
    recoders_[g].init(rng, 1.0 / std::sqrt(static_cast<double>(config_.feature_dim)));
    captures_[g].init(rng);
  }
  heads_.init(rng, 1.0 / std::sqrt(static_cast<double>(heads_.action.in_features())));
}

HeadOutputs StreamNet::forward(const Tensor& map, Cache* cache) const {
  PooledStages pooled = self_adaptive_pool(map, config_.alpha, config_.pool);
  RecodedStages recoded = recode(pooled, {&recoders_[0], &recoders_[1], &recoders_[2]});
  std::array<std::vector<double>, 3> features;
  for (size_t g = 0; g < 3; ++g) {
    features[g] = captures_[g].forward(recoded.stages[g], cache ? &cache->captures[g] : nullptr);
  }
  HeadOutputs out = stage_heads(features[0], features[1], features[2], heads_);
  if (cache) {
    cache->units = map.dim(1);
    cache->context.clear();
    for (const auto& f : features) cache->context.insert(cache->context.end(), f.begin(), f.end());
    cache->pooled = std::move(pooled);
    cache->recoded = std::move(recoded);
    cache->features = std::move(features);
  }
  return out;
}

Tensor StreamNet::backward(const Cache& cache, const HeadGradients& grads, bool input_grad) {
  auto [d_during, d_context] = heads_.backward(cache.features[1], cache.context, grads);
  const size_t f = cache.features[0].size();
  for (size_t i = 0; i < f; ++i) d_context[f + i] += d_during[i];
  const int alpha = config_.alpha;
  Tensor d_pooled(cache.pooled.vectors.shape());
  for (size_t g = 0; g < 3; ++g) {
    const std::span<const double> df(d_context.data() + g * f, f);
    const Tensor d_stage = captures_[g].backward(cache.captures[g], df);
    for (int j = 0; j < alpha; ++j) {
      const int row = static_cast<int>(g) * alpha + j;
      const std::span<const double> dd(d_stage.data() + static_cast<size_t>(j) * d_stage.dim(1),
                                       static_cast<size_t>(d_stage.dim(1)));
      const auto dr = recoders_[g].backward(cache.pooled.row(row), dd);
      std::copy(dr.begin(), dr.end(), d_pooled.data() + static_cast<size_t>(row) * d_pooled.dim(1));
    }
  }
  if (!input_grad) return {};
  return self_adaptive_pool_backward(cache.pooled, d_pooled, cache.units, config_.pool);
}

void StreamNet::collect(ParameterList& out) {
  for (auto& r : recoders_) r.collect(out);
  for (auto& c : captures_) c.collect(out);
  heads_.collect(out);
}

Subnet2::Subnet2(const Subnet2Config& config) : config_(config) {
  if (config.share_streams) {
    streams_.emplace_back("subnet2.shared", config);
  } else {
    streams_.emplace_back("subnet2.spatial", config);
    streams_.emplace_back("subnet2.temporal", config);
  }
}

void Subnet2::init(std::mt19937_64& rng) {
  for (auto& s : streams_) s.init(rng);
}

HeadOutputs Subnet2::forward(const ProposalFeatureMaps& maps, Cache* cache) const {
  const HeadOutputs s = stream(0).forward(maps.spatial, cache ? &cache->spatial : nullptr);
  const HeadOutputs t = stream(1).forward(maps.temporal, cache ? &cache->temporal : nullptr);
  return fuse_equal(s, t);
}

std::pair<Tensor, Tensor> Subnet2::backward(const Cache& cache, const HeadGradients& grads,
                                            bool input_grad) {
  const HeadGradients half = grads.scaled(0.5);
  Tensor ds = stream(0).backward(cache.spatial, half, input_grad);
  Tensor dt = stream(1).backward(cache.temporal, half, input_grad);
  return {std::move(ds), std::move(dt)};
}

void Subnet2::collect(ParameterList& out) {
  for (auto& s : streams_) s.collect(out);
}

}  // namespace gemini
