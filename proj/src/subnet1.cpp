#include "gemini/subnet1.hpp"

#include <cmath>

#include "gemini/error.hpp"

namespace gemini {

void BackboneConfig::validate() const {
  if (feature_dim < 8) throw ConfigError("feature_dim must be >= 8");
  if (unit_length < 1) throw ConfigError("unit_length must be >= 1");
  if (mode == BackboneMode::kPixel) {
    if (height < 8 || width < 8) throw ConfigError("pixel mode needs H, W >= 8");
    if (stage_widths.empty()) throw ConfigError("pixel backbone needs at least one conv stage");
  }
}

Backbone::Backbone(const std::string& name, int in_channels, const BackboneConfig& config)
    : in_channels_(in_channels), height_(config.height), width_(config.width) {
  int channels = in_channels;
  int h = height_;
  int w = width_;
  for (size_t i = 0; i < config.stage_widths.size(); ++i) {
    Conv2dSpec spec{channels, config.stage_widths[i], 3, 3, 2, 2, 1, 1};
    convs_.emplace_back(name + ".conv" + std::to_string(i + 1), spec);
    std::tie(h, w) = convs_.back().output_hw(h, w, name + ".conv" + std::to_string(i + 1));
    channels = config.stage_widths[i];
  }
  project_ = Linear(name + ".project", channels, config.feature_dim);
}

void Backbone::init(std::mt19937_64& rng) {
  for (auto& conv : convs_) conv.init(rng);
  project_.init(rng, 1.0 / std::sqrt(static_cast<double>(project_.in_features())));
}

std::vector<double> Backbone::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 3 || x.dim(0) != in_channels_ || x.dim(1) != height_ || x.dim(2) != width_) {
    throw ConfigError("backbone input " + x.shape_string() + " does not match configured " +
                      std::to_string(in_channels_) + "x" + std::to_string(height_) + "x" +
                      std::to_string(width_));
  }
  Tensor h = x;
  for (const auto& conv : convs_) {
    if (cache) cache->inputs.push_back(h);
    h = conv.forward(h);
    relu_inplace(h);
  }
  const int c_n = h.dim(0);
  const int area = h.dim(1) * h.dim(2);
  std::vector<double> pooled(static_cast<size_t>(c_n), 0.0);
  for (int c = 0; c < c_n; ++c) {
    double acc = 0.0;
    for (int i = 0; i < area; ++i) acc += h[static_cast<size_t>(c) * area + i];
    pooled[static_cast<size_t>(c)] = acc / area;
  }
  auto out = project_.forward(pooled);
  if (cache) {
    cache->last = std::move(h);
    cache->pooled = std::move(pooled);
  }
  return out;
}

void Backbone::backward(const Cache& cache, std::span<const double> dy) {
  const auto d_pooled = project_.backward(cache.pooled, dy);
  Tensor g(cache.last.shape());
  const int area = g.dim(1) * g.dim(2);
  for (int c = 0; c < g.dim(0); ++c) {
    for (int i = 0; i < area; ++i) g[static_cast<size_t>(c) * area + i] = d_pooled[static_cast<size_t>(c)] / area;
  }
  relu_backward_inplace(g, cache.last);
  for (size_t i = convs_.size(); i-- > 0;) {
    g = convs_[i].backward(cache.inputs[i], g);
    if (i > 0) relu_backward_inplace(g, cache.inputs[i]);
  }
}

void Backbone::collect(ParameterList& out) {
  for (auto& conv : convs_) conv.collect(out);
  project_.collect(out);
}

FlowStack::FlowStack(Tensor planes, int unit_length) : planes_(std::move(planes)) {
  if (planes_.rank() != 3 || planes_.dim(0) != 2 * unit_length) {
    throw ShapeError("flow stack must have 2*n_u = " + std::to_string(2 * unit_length) +
                     " planes, got shape " + planes_.shape_string());
  }
}

std::vector<double> extract_spatial_feature(const RgbFrame& frame, const Backbone& spatial,
                                            Backbone::Cache* cache) {
  return spatial.forward(frame, cache);
}

std::vector<double> extract_temporal_feature(const FlowStack& stack, const Backbone& temporal,
                                             Backbone::Cache* cache) {
  return temporal.forward(stack.planes(), cache);
}

std::vector<double> column(const Tensor& map, int j) {
  std::vector<double> out(static_cast<size_t>(map.dim(0)));
  for (int d = 0; d < map.dim(0); ++d) out[static_cast<size_t>(d)] = map.at(d, j);
  return out;
}

namespace {

void set_column(Tensor& map, int j, std::span<const double> v) {
  for (int d = 0; d < map.dim(0); ++d) map.at(d, j) = v[static_cast<size_t>(d)];
}

void check_unit_count(const AugmentedProposal& proposal, size_t supplied) {
  if (static_cast<int64_t>(supplied) != proposal.unit_count()) {
    throw ShapeError("proposal covers " + std::to_string(proposal.unit_count()) +
                     " units but " + std::to_string(supplied) + " unit inputs were supplied");
  }
  if (supplied == 0) throw ShapeError("proposal covers no units");
}

}  // namespace

ProposalFeatureMaps build_feature_maps(const AugmentedProposal& proposal,
                                       std::span<const UnitFeaturePair> units) {
  check_unit_count(proposal, units.size());
  const int d = static_cast<int>(units[0].spatial.size());
  const int m = static_cast<int>(units.size());
  ProposalFeatureMaps maps{Tensor({d, m}), Tensor({d, m})};
  for (int j = 0; j < m; ++j) {
    const auto& u = units[static_cast<size_t>(j)];
    if (static_cast<int>(u.spatial.size()) != d || static_cast<int>(u.temporal.size()) != d) {
      throw ShapeError("unit feature dimension mismatch at unit " + std::to_string(j));
    }
    set_column(maps.spatial, j, u.spatial);
    set_column(maps.temporal, j, u.temporal);
  }
  return maps;
}

ProposalFeatureMaps build_feature_maps(
    const AugmentedProposal& proposal, std::span<const PixelUnit> units, const Backbone& spatial,
    const Backbone& temporal, std::vector<std::pair<Backbone::Cache, Backbone::Cache>>* caches) {
  check_unit_count(proposal, units.size());
  const int m = static_cast<int>(units.size());
  ProposalFeatureMaps maps;
  for (int j = 0; j < m; ++j) {
    Backbone::Cache cs;
    Backbone::Cache ct;
    const auto vs = spatial.forward(units[static_cast<size_t>(j)].frame, caches ? &cs : nullptr);
    const auto vt = temporal.forward(units[static_cast<size_t>(j)].flow, caches ? &ct : nullptr);
    if (j == 0) {
      const int d = static_cast<int>(vs.size());
      maps.spatial = Tensor({d, m});
      maps.temporal = Tensor({d, m});
    }
    set_column(maps.spatial, j, vs);
    set_column(maps.temporal, j, vt);
    if (caches) caches->emplace_back(std::move(cs), std::move(ct));
  }
  return maps;
}

std::pair<int, int> thirds_bounds(int m) {
  const int outer = m / 3;
  return {outer, m - outer};
}

AuxiliaryHeads::AuxiliaryHeads(const std::string& name, int feature_dim, int num_classes)
    : feature_dim_(feature_dim), heads_(name, feature_dim, 3 * feature_dim, num_classes) {}

void AuxiliaryHeads::init(std::mt19937_64& rng) {
  heads_.init(rng, 1.0 / std::sqrt(static_cast<double>(feature_dim_)));
}

namespace {

// Mean of columns [lo, hi) of a (D, M) map.
std::vector<double> mean_columns(const Tensor& map, int lo, int hi) {
  std::vector<double> out(static_cast<size_t>(map.dim(0)), 0.0);
  for (int d = 0; d < map.dim(0); ++d) {
    double acc = 0.0;
    for (int j = lo; j < hi; ++j) acc += map.at(d, j);
    out[static_cast<size_t>(d)] = acc / (hi - lo);
  }
  return out;
}

}  // namespace

HeadOutputs AuxiliaryHeads::forward(const ProposalFeatureMaps& maps, Cache* cache) const {
  const int m = maps.units();
  if (m < 3) {
    throw ProposalTooShortError("auxiliary heads need at least 3 units, got " + std::to_string(m));
  }
  const int d = maps.feature_dim();
  const auto [a, b] = thirds_bounds(m);
  const std::array<std::pair<int, int>, 3> parts = {{{0, a}, {a, b}, {b, m}}};
  std::vector<double> context(static_cast<size_t>(3 * d), 0.0);
  std::vector<double> action(static_cast<size_t>(d), 0.0);
  for (int p = 0; p < 3; ++p) {
    const auto s = mean_columns(maps.spatial, parts[p].first, parts[p].second);
    const auto t = mean_columns(maps.temporal, parts[p].first, parts[p].second);
    for (int i = 0; i < d; ++i) {
      const double fused = 0.5 * s[static_cast<size_t>(i)] + 0.5 * t[static_cast<size_t>(i)];
      context[static_cast<size_t>(p * d + i)] = fused;
      if (p == 1) action[static_cast<size_t>(i)] = fused;
    }
  }
  HeadOutputs out = heads_.forward(action, context);
  if (cache) {
    cache->units = m;
    cache->action_in = std::move(action);
    cache->context_in = std::move(context);
  }
  return out;
}

std::pair<Tensor, Tensor> AuxiliaryHeads::backward(const Cache& cache, const HeadGradients& grads) {
  auto [d_action, d_context] = heads_.backward(cache.action_in, cache.context_in, grads);
  const int d = feature_dim_;
  const int m = cache.units;
  const auto [a, b] = thirds_bounds(m);
  const std::array<std::pair<int, int>, 3> parts = {{{0, a}, {a, b}, {b, m}}};
  Tensor dv({d, m});
  for (int p = 0; p < 3; ++p) {
    const double inv = 1.0 / (parts[p].second - parts[p].first);
    for (int i = 0; i < d; ++i) {
      double g = d_context[static_cast<size_t>(p * d + i)];
      if (p == 1) g += d_action[static_cast<size_t>(i)];
      // 0.5 from the equal-weight stream fusion, 1/len from the mean.
      const double per_column = 0.5 * g * inv;
      for (int j = parts[p].first; j < parts[p].second; ++j) dv.at(i, j) = per_column;
    }
  }
  return {dv, dv};
}

Subnet1::Subnet1(const BackboneConfig& config, int num_classes)
    : config_(config), aux_("subnet1.aux", config.feature_dim, num_classes) {
  config_.validate();
  if (pixel_mode()) {
    spatial_ = Backbone("subnet1.spatial", 3, config_);
    temporal_ = Backbone("subnet1.temporal", 2 * config_.unit_length, config_);
  }
}

void Subnet1::init(std::mt19937_64& rng) {
  if (pixel_mode()) {
    spatial_.init(rng);
    temporal_.init(rng);
  }
  aux_.init(rng);
}

void Subnet1::collect(ParameterList& out) {
  if (pixel_mode()) {
    spatial_.collect(out);
    temporal_.collect(out);
  }
  aux_.collect(out);
}

}  // namespace gemini
