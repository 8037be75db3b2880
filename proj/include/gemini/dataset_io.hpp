#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gemini/dataset.hpp"
#include "gemini/inference.hpp"
#include "json.hpp"

namespace gemini {

inline constexpr int kSchemaVersion = 1;

/// Annotation file: {schema_version, videos: [{video_id, frames, fps, split,
/// instances: [{class, start, end}]}]}. `split` is optional and defaults to "test".
nlohmann::json annotations_to_json(const Dataset& data);
/// Replaces the videos' metadata and instances; features and actionness are untouched.
std::vector<Video> videos_from_annotations(const nlohmann::json& j);

/// Writes annotations.json, dataset.json, actionness.json and the per-video
/// feature or pixel tensors under `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a 64 over the dataset's annotations, actionness and input tensors.
uint64_t dataset_fingerprint(const Dataset& data);

/// Detection records as JSON lines {video_id, class, start, end, score_a, score_i, score_s}.
void write_detections(const std::vector<Detection>& detections, const std::filesystem::path& path);
std::vector<Detection> read_detections(const std::filesystem::path& path);

/// One row per class plus an "mAP" row; columns are the tIoU thresholds. The
/// last row is the average mAP over 0.50:0.05:0.95.
void write_metrics_csv(const EvaluationResult& result, const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

/// Hex rendering of a 64-bit hash.
std::string hex64(uint64_t value);

}  // namespace gemini
