#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace gemini {

/// Inclusive, 1-based frame interval.
class TemporalInterval {
 public:
  TemporalInterval(int64_t start_frame, int64_t end_frame);

  int64_t start() const { return start_; }
  int64_t end() const { return end_; }
  int64_t duration() const { return end_ - start_ + 1; }

  /// Real-valued center, e.g. [1,4] -> 2.5.
  double center() const { return 0.5 * static_cast<double>(start_ + end_); }

  bool contains(const TemporalInterval& other) const {
    return start_ <= other.start_ && other.end_ <= end_;
  }

  friend bool operator==(const TemporalInterval&, const TemporalInterval&) = default;
  friend auto operator<=>(const TemporalInterval&, const TemporalInterval&) = default;

 private:
  int64_t start_;
  int64_t end_;
};

void to_json(nlohmann::json& j, const TemporalInterval& interval);
TemporalInterval interval_from_json(const nlohmann::json& j);

struct Unit {
  int64_t index;  // 1-based
  TemporalInterval frames;
};

/// Splits frames 1..T into floor(T/unit_length) units; the remainder is dropped.
std::vector<Unit> partition_units(int64_t total_frames, int64_t unit_length);

/// Index range [first, last] (1-based) of the units that overlap `interval`,
/// restricted to the first `unit_count` units. Returns first > last when none do.
std::pair<int64_t, int64_t> overlapping_units(const TemporalInterval& interval,
                                              int64_t unit_length, int64_t unit_count);

/// Temporal IoU counted in whole frames.
double tiou(const TemporalInterval& a, const TemporalInterval& b);

struct AugmentedProposal {
  TemporalInterval core;
  TemporalInterval extended;
  bool clamped = false;
  // Units overlapping `extended`, as a 1-based inclusive index range.
  int64_t first_unit = 1;
  int64_t last_unit = 0;

  int64_t unit_count() const { return last_unit - first_unit + 1; }
};

/// Extends `p` by d-1 frames on both sides (d = p.duration()) and clamps the
/// result to [1, video_frames].
AugmentedProposal augment_proposal(const TemporalInterval& p, int64_t video_frames);

/// Same as augment_proposal, and fills in the covered units.
AugmentedProposal augment_proposal(const TemporalInterval& p, int64_t video_frames,
                                   int64_t unit_length);

struct OffsetPair {
  double d_loc = 0.0;
  double d_len = 0.0;
};

/// Real-valued (center, length) form of an interval.
struct CenterLength {
  double loc;
  double len;
};

OffsetPair encode_offsets(const TemporalInterval& gt, const TemporalInterval& anchor);
OffsetPair encode_offsets(const CenterLength& gt, const CenterLength& anchor);

/// Real-valued inverse of encode_offsets.
CenterLength decode_center_length(const TemporalInterval& anchor, const OffsetPair& pred);

/// Decodes and rounds: start = round(loc - (len-1)/2), end = start + round(len) - 1.
/// Throws DegenerateDetectionError when the decoded length rounds below one frame
/// or the start falls before frame 1.
TemporalInterval decode_offsets(const TemporalInterval& anchor, const OffsetPair& pred);

/// Seconds <-> frames for a video sampled at `fps`. Frame k covers
/// [(k-1)/fps, k/fps).
struct FrameClock {
  double fps;

  double seconds_at_start(int64_t frame) const { return static_cast<double>(frame - 1) / fps; }
  double seconds_at_end(int64_t frame) const { return static_cast<double>(frame) / fps; }
  int64_t frame_at(double seconds) const;
};

}  // namespace gemini
