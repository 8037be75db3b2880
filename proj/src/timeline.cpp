#include "gemini/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemini/error.hpp"

namespace gemini {

TemporalInterval::TemporalInterval(int64_t start_frame, int64_t end_frame)
    : start_(start_frame), end_(end_frame) {
  if (start_frame < 1 || end_frame < start_frame) {
    throw Error("invalid interval [" + std::to_string(start_frame) + ", " +
                std::to_string(end_frame) + "]");
  }
}

void to_json(nlohmann::json& j, const TemporalInterval& interval) {
  j = nlohmann::json{{"start", interval.start()}, {"end", interval.end()}};
}

TemporalInterval interval_from_json(const nlohmann::json& j) {
  return TemporalInterval(j.at("start").get<int64_t>(), j.at("end").get<int64_t>());
}

std::vector<Unit> partition_units(int64_t total_frames, int64_t unit_length) {
  if (unit_length < 1) throw ConfigError("unit length must be >= 1");
  if (total_frames < unit_length) {
    throw EmptyVideoError("video has " + std::to_string(total_frames) +
                          " frames, fewer than one unit of " + std::to_string(unit_length));
  }
  const int64_t count = total_frames / unit_length;
  std::vector<Unit> units;
  units.reserve(static_cast<size_t>(count));
  for (int64_t i = 1; i <= count; ++i) {
    units.push_back(Unit{i, TemporalInterval(unit_length * (i - 1) + 1, unit_length * i)});
  }
  return units;
}

std::pair<int64_t, int64_t> overlapping_units(const TemporalInterval& interval,
                                              int64_t unit_length, int64_t unit_count) {
  const int64_t first = (interval.start() - 1) / unit_length + 1;
  const int64_t last = std::min((interval.end() - 1) / unit_length + 1, unit_count);
  return {first, last};
}

double tiou(const TemporalInterval& a, const TemporalInterval& b) {
  const int64_t lo = std::max(a.start(), b.start());
  const int64_t hi = std::min(a.end(), b.end());
  if (hi < lo) return 0.0;
  const int64_t inter = hi - lo + 1;
  const int64_t uni = a.duration() + b.duration() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

AugmentedProposal augment_proposal(const TemporalInterval& p, int64_t video_frames) {
  if (p.end() > video_frames) {
    throw Error("proposal ends at frame " + std::to_string(p.end()) + " beyond video length " +
                std::to_string(video_frames));
  }
  const int64_t d = p.duration();
  const int64_t raw_start = p.start() - d + 1;
  const int64_t raw_end = p.end() + d - 1;
  const int64_t start = std::max<int64_t>(raw_start, 1);
  const int64_t end = std::min(raw_end, video_frames);
  AugmentedProposal out{p, TemporalInterval(start, end)};
  out.clamped = start != raw_start || end != raw_end;
  return out;
}

AugmentedProposal augment_proposal(const TemporalInterval& p, int64_t video_frames,
                                   int64_t unit_length) {
  AugmentedProposal out = augment_proposal(p, video_frames);
  const auto [first, last] = overlapping_units(out.extended, unit_length, video_frames / unit_length);
  out.first_unit = first;
  out.last_unit = last;
  return out;
}

OffsetPair encode_offsets(const CenterLength& gt, const CenterLength& anchor) {
  return OffsetPair{(gt.loc - anchor.loc) / anchor.len, std::log(gt.len / anchor.len)};
}

OffsetPair encode_offsets(const TemporalInterval& gt, const TemporalInterval& anchor) {
  return encode_offsets(CenterLength{gt.center(), static_cast<double>(gt.duration())},
                        CenterLength{anchor.center(), static_cast<double>(anchor.duration())});
}

CenterLength decode_center_length(const TemporalInterval& anchor, const OffsetPair& pred) {
  const double len = static_cast<double>(anchor.duration());
  return CenterLength{anchor.center() + pred.d_loc * len, len * std::exp(pred.d_len)};
}

TemporalInterval decode_offsets(const TemporalInterval& anchor, const OffsetPair& pred) {
  const CenterLength cl = decode_center_length(anchor, pred);
  if (!std::isfinite(cl.loc) || !std::isfinite(cl.len) || cl.len < 1.0) {
    throw DegenerateDetectionError("decoded length " + std::to_string(cl.len) +
                                   " is below one frame");
  }
  const auto start = static_cast<int64_t>(std::llround(cl.loc - (cl.len - 1.0) / 2.0));
  const int64_t end = start + static_cast<int64_t>(std::llround(cl.len)) - 1;
  if (end < 1) {
    throw DegenerateDetectionError("decoded interval ends before the first frame");
  }
  return TemporalInterval(std::max<int64_t>(start, 1), end);
}

int64_t FrameClock::frame_at(double seconds) const {
  return static_cast<int64_t>(std::floor(seconds * fps)) + 1;
}

}  // namespace gemini
