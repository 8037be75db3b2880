#include "gemini/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gemini/error.hpp"

namespace gemini {

void SyntheticConfig::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic data needs K >= 2 classes");
  if (num_train < 0 || num_test < 0 || num_train + num_test == 0) {
    throw ConfigError("synthetic data needs at least one video");
  }
  if (unit_length < 1 || frames_per_video < unit_length) {
    throw ConfigError("video shorter than one unit");
  }
  if (min_duration < 1 || max_duration < min_duration || max_duration > frames_per_video) {
    throw ConfigError("instance duration range must lie within the video length");
  }
  if (min_instances < 0 || max_instances < min_instances) {
    throw ConfigError("instance count range is empty");
  }
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
  if (feature_dim < 8) throw ConfigError("feature_dim must be >= 8");
  if (mode == BackboneMode::kPixel && (height < 8 || width < 8)) {
    throw ConfigError("pixel mode needs H, W >= 8");
  }
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"num_train", c.num_train},
                     {"num_test", c.num_test},
                     {"frames_per_video", c.frames_per_video},
                     {"unit_length", c.unit_length},
                     {"fps", c.fps},
                     {"num_classes", c.num_classes},
                     {"instances", {c.min_instances, c.max_instances}},
                     {"duration", {c.min_duration, c.max_duration}},
                     {"min_separation", c.min_separation},
                     {"context_margin", c.context_margin},
                     {"mode", c.mode == BackboneMode::kPixel ? "pixel" : "feature"},
                     {"feature_dim", c.feature_dim},
                     {"noise", c.noise},
                     {"resolution", {c.height, c.width}}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c.seed = j.at("seed").get<uint64_t>();
  c.num_train = j.at("num_train").get<int>();
  c.num_test = j.at("num_test").get<int>();
  c.frames_per_video = j.at("frames_per_video").get<int64_t>();
  c.unit_length = j.at("unit_length").get<int>();
  c.fps = j.at("fps").get<double>();
  c.num_classes = j.at("num_classes").get<int>();
  c.min_instances = j.at("instances").at(0).get<int>();
  c.max_instances = j.at("instances").at(1).get<int>();
  c.min_duration = j.at("duration").at(0).get<int64_t>();
  c.max_duration = j.at("duration").at(1).get<int64_t>();
  c.min_separation = j.at("min_separation").get<int64_t>();
  c.context_margin = j.at("context_margin").get<bool>();
  c.mode = j.at("mode").get<std::string>() == "pixel" ? BackboneMode::kPixel : BackboneMode::kFeature;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.noise = j.at("noise").get<double>();
  c.height = j.at("resolution").at(0).get<int>();
  c.width = j.at("resolution").at(1).get<int>();
}

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_rng(uint64_t seed, uint64_t stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 1)));
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<GroundTruth> plant_instances(const SyntheticConfig& c, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(c.min_instances, c.max_instances);
  std::uniform_int_distribution<int64_t> dur_dist(c.min_duration, c.max_duration);
  std::uniform_int_distribution<int> class_dist(1, c.num_classes);
  const int64_t t = c.frames_per_video;

  int count = count_dist(rng);
  std::vector<int64_t> durations;
  for (int i = 0; i < count; ++i) durations.push_back(dur_dist(rng));

  auto required = [&](const std::vector<int64_t>& d) {
    int64_t total = 0;
    for (int64_t x : d) total += x;
    if (!d.empty()) total += static_cast<int64_t>(d.size() - 1) * c.min_separation;
    if (c.context_margin && !d.empty()) total += (d.front() - 1) + (d.back() - 1);
    return total;
  };
  // Shrink durations, then the instance count, until the packing fits.
  while (required(durations) > t) {
    auto longest = std::max_element(durations.begin(), durations.end());
    if (longest != durations.end() && *longest > c.min_duration) {
      *longest = c.min_duration;
    } else if (static_cast<int>(durations.size()) > c.min_instances) {
      durations.pop_back();
    } else {
      throw GenerationError("cannot pack " + std::to_string(durations.size()) +
                            " instances into " + std::to_string(t) + " frames");
    }
  }
  count = static_cast<int>(durations.size());
  if (count == 0) return {};

  // Spread the slack over the k+1 gaps with sorted uniform cut points.
  const int64_t slack = t - required(durations);
  std::uniform_int_distribution<int64_t> cut(0, slack);
  std::vector<int64_t> cuts;
  for (int i = 0; i < count; ++i) cuts.push_back(cut(rng));
  std::sort(cuts.begin(), cuts.end());

  std::vector<GroundTruth> out;
  int64_t cursor = 1 + (c.context_margin ? durations.front() - 1 : 0);
  int64_t prev_cut = 0;
  for (int i = 0; i < count; ++i) {
    cursor += cuts[static_cast<size_t>(i)] - prev_cut;
    prev_cut = cuts[static_cast<size_t>(i)];
    const int64_t start = cursor;
    const int64_t end = start + durations[static_cast<size_t>(i)] - 1;
    out.push_back(GroundTruth{TemporalInterval(start, end), class_dist(rng)});
    cursor = end + 1 + c.min_separation;
  }
  return out;
}

// Fraction of unit `u` (1-based) covered by each instance.
std::vector<double> unit_coverage(const std::vector<GroundTruth>& instances, int64_t u, int nu) {
  const TemporalInterval unit(nu * (u - 1) + 1, nu * u);
  std::vector<double> cover;
  for (const auto& g : instances) {
    const int64_t lo = std::max(unit.start(), g.interval.start());
    const int64_t hi = std::min(unit.end(), g.interval.end());
    cover.push_back(hi >= lo ? static_cast<double>(hi - lo + 1) / nu : 0.0);
  }
  return cover;
}

void render_pixels(const SyntheticConfig& c, Video& v, std::mt19937_64& rng) {
  const int h = c.height;
  const int w = c.width;
  const auto frames = static_cast<int>(v.frames);
  v.rgb = Tensor({frames, 3, h, w});
  v.flow = Tensor({frames, 2, h, w});
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(std::min(h, w)));
  constexpr int kSquare = 4;
  constexpr double kSpeed = 1.5;
  for (int k = 0; k < frames; ++k) {
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) v.rgb[((static_cast<size_t>(k) * 3 + ch) * h + y) * w + x] = 0.2;
      }
    }
  }
  for (const auto& g : v.instances) {
    const double angle = 2.0 * std::numbers::pi * g.class_id / c.num_classes;
    const double vx = kSpeed * std::cos(angle);
    const double vy = kSpeed * std::sin(angle);
    double px = pos(rng);
    double py = pos(rng);
    for (int64_t f = g.interval.start(); f <= g.interval.end(); ++f) {
      const auto k = static_cast<int>(f - 1);
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      for (int dy = 0; dy < kSquare; ++dy) {
        for (int dx = 0; dx < kSquare; ++dx) {
          const int x = ((x0 + dx) % w + w) % w;
          const int y = ((y0 + dy) % h + h) % h;
          for (int ch = 0; ch < 3; ++ch) v.rgb[((static_cast<size_t>(k) * 3 + ch) * h + y) * w + x] = 1.0;
          if (f < g.interval.end()) {
            v.flow[((static_cast<size_t>(k) * 2 + 0) * h + y) * w + x] = vx;
            v.flow[((static_cast<size_t>(k) * 2 + 1) * h + y) * w + x] = vy;
          }
        }
      }
      px += vx;
      py += vy;
    }
  }
  for (double& p : v.rgb.values()) p = to_f32(p + c.noise * gauss(rng));
  for (double& p : v.flow.values()) p = to_f32(p + c.noise * gauss(rng));
}

}  // namespace

ClassPatterns synthetic_patterns(const SyntheticConfig& config) {
  auto rng = stream_rng(config.seed, 0xC1A55ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ClassPatterns p{Tensor({config.num_classes + 1, config.feature_dim}),
                  Tensor({config.num_classes + 1, config.feature_dim})};
  for (double& v : p.spatial.values()) v = gauss(rng);
  for (double& v : p.temporal.values()) v = gauss(rng);
  return p;
}

Dataset generate_synthetic_dataset(const SyntheticConfig& config) {
  config.validate();
  Dataset data;
  data.mode = config.mode;
  data.unit_length = config.unit_length;
  data.feature_dim = config.feature_dim;
  data.num_classes = config.num_classes;
  data.height = config.height;
  data.width = config.width;
  const ClassPatterns patterns = synthetic_patterns(config);
  const int total = config.num_train + config.num_test;
  data.videos.resize(static_cast<size_t>(total));
  const int nu = config.unit_length;
  const int d = config.feature_dim;
  for (int i = 0; i < total; ++i) {
    auto rng = stream_rng(config.seed, static_cast<uint64_t>(i) + 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Video& v = data.videos[static_cast<size_t>(i)];
    v.id = "video_" + std::to_string(i);
    v.split = i < config.num_train ? "train" : "test";
    v.frames = config.frames_per_video;
    v.fps = config.fps;
    v.instances = plant_instances(config, rng);
    const int64_t units = v.frames / nu;
    if (config.mode == BackboneMode::kFeature) {
      v.spatial_features = Tensor({static_cast<int>(units), d});
      v.temporal_features = Tensor({static_cast<int>(units), d});
    }
    for (int64_t u = 1; u <= units; ++u) {
      const auto cover = unit_coverage(v.instances, u, nu);
      double covered = 0.0;
      for (double f : cover) covered += f;
      if (config.mode == BackboneMode::kFeature) {
        for (int k = 0; k < d; ++k) {
          double s = (1.0 - covered) * patterns.spatial.at(0, k);
          double t = (1.0 - covered) * patterns.temporal.at(0, k);
          for (size_t g = 0; g < cover.size(); ++g) {
            s += cover[g] * patterns.spatial.at(v.instances[g].class_id, k);
            t += cover[g] * patterns.temporal.at(v.instances[g].class_id, k);
          }
          v.spatial_features.at(static_cast<int>(u - 1), k) = to_f32(s + config.noise * gauss(rng));
          v.temporal_features.at(static_cast<int>(u - 1), k) = to_f32(t + config.noise * gauss(rng));
        }
      }
      const double a = 0.05 + 0.9 * covered + config.noise * gauss(rng);
      v.actionness.push_back(std::clamp(a, 0.0, 1.0));
    }
    if (config.mode == BackboneMode::kPixel) render_pixels(config, v, rng);
  }
  return data;
}

}  // namespace gemini
