#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gemini/config.hpp"
#include "gemini/dataset.hpp"
#include "gemini/inference.hpp"
#include "gemini/model.hpp"
#include "gemini/training.hpp"
#include "json.hpp"

namespace gemini {

inline constexpr const char* kToolVersion = "gemini-tal 0.1.0";

struct RunManifest {
  RunConfig config;
  std::string tool_version = kToolVersion;
  uint64_t dataset_fingerprint = 0;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest read_manifest(const std::filesystem::path& path);

struct TrainRunOutput {
  RunManifest manifest;
  TrainingResult training;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains on `data` and writes manifest.json, history.jsonl and one
/// checkpoint per phase (checkpoints/step{1,2,3}.gckp) under `out_dir`.
TrainRunOutput train_run(const RunConfig& config, const Dataset& data,
                         const std::filesystem::path& out_dir);

/// Detections of one video: grouped proposals, model heads, combined scores,
/// per-class NMS and boundary refinement.
std::vector<Detection> detect_video(const GeminiModel& model, const Dataset& data, const Video& video,
                                    const RunConfig& config);

std::vector<Detection> detect_split(const GeminiModel& model, const Dataset& data,
                                    const std::string& split, const RunConfig& config);

EvaluationResult evaluate_split(std::span<const Detection> detections, const Dataset& data,
                                const std::string& split, const std::vector<double>& thresholds,
                                bool strict = true);

/// The annotations of `split` as detections with unit scores.
std::vector<Detection> ground_truth_detections(const Dataset& data, const std::string& split);

/// Loads the final checkpoint of a training run directory.
GeminiModel load_trained_model(const std::filesystem::path& run_dir, const RunConfig& config);

struct SweepOptions {
  std::vector<int> alphas = {1, 3, 9};
  std::vector<int> ns = {17};
  std::vector<PoolMethod> methods = {PoolMethod::kAverage, PoolMethod::kMax};
  // Shortest augmented proposal every cell sees; zero takes the base config's.
  int min_units = 0;
};

struct SweepCell {
  int alpha = 0;
  int n = 0;
  PoolMethod method = PoolMethod::kAverage;
  bool skipped = false;
  std::string note;
  double map_01 = 0.0;
  double map_03 = 0.0;
  double map_05 = 0.0;
  double seconds = 0.0;
};

/// Trains and evaluates every (alpha, n, method) cell. Cells whose 3*alpha
/// exceeds the minimum proposal length are skipped and flagged.
std::vector<SweepCell> run_sweep(const RunConfig& base, const Dataset& data, const SweepOptions& options,
                                 const std::function<void(const SweepCell&)>& progress = {});

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

}  // namespace gemini
