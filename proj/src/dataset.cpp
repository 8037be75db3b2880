#include "gemini/dataset.hpp"

#include "gemini/error.hpp"

namespace gemini {

std::vector<const Video*> Dataset::split(const std::string& name) const {
  std::vector<const Video*> out;
  for (const auto& v : videos) {
    if (v.split == name) out.push_back(&v);
  }
  return out;
}

std::vector<UnitFeaturePair> unit_features(const Dataset& data, const Video& video, int64_t first,
                                           int64_t last) {
  const int d = data.feature_dim;
  if (first < 1 || last > video.spatial_features.dim(0)) {
    throw ShapeError("unit range outside video " + video.id);
  }
  std::vector<UnitFeaturePair> out;
  out.reserve(static_cast<size_t>(last - first + 1));
  for (int64_t u = first; u <= last; ++u) {
    const size_t off = static_cast<size_t>(u - 1) * d;
    UnitFeaturePair p;
    p.spatial.assign(video.spatial_features.data() + off, video.spatial_features.data() + off + d);
    p.temporal.assign(video.temporal_features.data() + off, video.temporal_features.data() + off + d);
    out.push_back(std::move(p));
  }
  return out;
}

PixelUnit pixel_unit(const Dataset& data, const Video& video, int64_t unit, int frame_offset) {
  const int nu = data.unit_length;
  const int h = data.height;
  const int w = data.width;
  const size_t plane = static_cast<size_t>(h) * w;
  const int64_t first_frame = (unit - 1) * nu;  // 0-based
  PixelUnit out{Tensor({3, h, w}), Tensor({2 * nu, h, w})};
  const size_t rgb_off = static_cast<size_t>(first_frame + frame_offset) * 3 * plane;
  std::copy(video.rgb.data() + rgb_off, video.rgb.data() + rgb_off + 3 * plane, out.frame.data());
  const size_t flow_off = static_cast<size_t>(first_frame) * 2 * plane;
  std::copy(video.flow.data() + flow_off, video.flow.data() + flow_off + 2 * nu * plane,
            out.flow.data());
  return out;
}

std::vector<LabeledInstance> ground_truth_records(const std::vector<const Video*>& videos) {
  std::vector<LabeledInstance> out;
  for (const Video* v : videos) {
    for (const auto& g : v->instances) out.push_back(LabeledInstance{v->id, g.class_id, g.interval});
  }
  return out;
}

}  // namespace gemini
