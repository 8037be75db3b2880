#include "gemini/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "gemini/checkpoint.hpp"
#include "gemini/dataset_io.hpp"
#include "gemini/error.hpp"
#include "gemini/layers.hpp"

namespace gemini {

namespace fs = std::filesystem;

nlohmann::json manifest_to_json(const RunManifest& m) {
  return {{"schema_version", kSchemaVersion},
          {"tool_version", m.tool_version},
          {"dataset_fingerprint", hex64(m.dataset_fingerprint)},
          {"model_config_hash", hex64(config_hash(m.config.model))},
          {"config", m.config}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw FormatError("manifest: unsupported schema_version");
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.dataset_fingerprint = std::stoull(j.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
  m.config = j.at("config").get<RunConfig>();
  return m;
}

RunManifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TrainRunOutput train_run(const RunConfig& config, const Dataset& data, const fs::path& out_dir) {
  config.validate();
  TrainRunOutput out;
  out.manifest.config = config;
  out.manifest.dataset_fingerprint = dataset_fingerprint(data);
  fs::create_directories(out_dir / "checkpoints");
  write_text(out_dir / "manifest.json", manifest_to_json(out.manifest).dump(2) + "\n");

  GeminiModel model(config.model);
  out.training = run_three_step_training(
      model, data, config.training, config.proposals, [&](Phase phase, int iterations, GeminiModel& m) {
        const auto path = out_dir / "checkpoints" / (to_string(phase) + ".gckp");
        save_checkpoint(path, m, to_string(phase), iterations);
        out.checkpoints.push_back(path);
      });

  std::ostringstream history;
  for (const auto& r : out.training.history) history << to_json(r).dump() << '\n';
  write_text(out_dir / "history.jsonl", history.str());
  return out;
}

std::vector<Detection> detect_video(const GeminiModel& model, const Dataset& data, const Video& video,
                                    const RunConfig& config) {
  const int min_units = config.proposals.effective_min_units(model.config());
  const auto proposals = video_proposals(data, video, config.proposals, min_units);
  const int k = model.config().num_classes();
  const bool sigmoid_mode = config.training.loss.tiou_mode == TiouMode::kSigmoid;

  std::vector<Detection> raw;
  std::vector<OffsetPair> regressions;
  for (const auto& p : proposals) {
    const auto input = proposal_input(data, video, p);
    const auto out = model.forward(p, input, true, false).principal;
    const auto log_p = log_softmax(out.action_logits);
    std::vector<double> tiou_p;
    if (sigmoid_mode) {
      for (double z : out.tiou_logits) tiou_p.push_back(sigmoid(z));
    } else {
      tiou_p = softmax(out.tiou_logits);
    }
    for (int c = 1; c <= k; ++c) {
      raw.push_back(Detection::make(video.id, p.core, c, log_p[static_cast<size_t>(c)],
                                    tiou_p[static_cast<size_t>(c - 1)]));
      regressions.push_back(out.regression);
    }
  }

  const auto kept = temporal_nms_indices(raw, config.inference.nms_threshold);
  std::vector<Detection> dets;
  std::vector<OffsetPair> regs;
  for (size_t i : kept) {
    dets.push_back(raw[i]);
    regs.push_back(regressions[i]);
  }
  if (config.inference.refine) dets = refine_boundaries(dets, regs, video.frames);
  std::sort(dets.begin(), dets.end(), ranks_before);
  return dets;
}

std::vector<Detection> detect_split(const GeminiModel& model, const Dataset& data, const std::string& split,
                                    const RunConfig& config) {
  std::vector<Detection> all;
  for (const Video* v : data.split(split)) {
    auto d = detect_video(model, data, *v, config);
    all.insert(all.end(), d.begin(), d.end());
  }
  return all;
}

EvaluationResult evaluate_split(std::span<const Detection> detections, const Dataset& data,
                                const std::string& split, const std::vector<double>& thresholds, bool strict) {
  const auto videos = data.split(split);
  const auto gts = ground_truth_records(videos);
  std::vector<Detection> in_split;
  for (const auto& d : detections) {
    const bool known = std::any_of(videos.begin(), videos.end(), [&](const Video* v) { return v->id == d.video_id; });
    if (known) in_split.push_back(d);
  }
  EvaluationOptions opts;
  opts.strict = strict;
  return evaluate(in_split, gts, thresholds, opts);
}

std::vector<Detection> ground_truth_detections(const Dataset& data, const std::string& split) {
  std::vector<Detection> out;
  for (const auto& g : ground_truth_records(data.split(split))) {
    out.push_back(Detection::make(g.video_id, g.interval, g.class_id, 0.0, 1.0));
  }
  return out;
}

GeminiModel load_trained_model(const fs::path& run_dir, const RunConfig& config) {
  GeminiModel model(config.model);
  load_checkpoint(run_dir / "checkpoints" / "step3.gckp", model);
  return model;
}

std::vector<SweepCell> run_sweep(const RunConfig& base, const Dataset& data, const SweepOptions& options,
                                 const std::function<void(const SweepCell&)>& progress) {
  const int min_units = options.min_units > 0 ? options.min_units : base.proposals.effective_min_units(base.model);
  std::vector<SweepCell> cells;
  for (int n : options.ns) {
    for (int alpha : options.alphas) {
      for (PoolMethod method : options.methods) {
        SweepCell cell;
        cell.alpha = alpha;
        cell.n = n;
        cell.method = method;
        const auto t0 = std::chrono::steady_clock::now();
        if (3 * alpha > min_units) {
          cell.skipped = true;
          cell.note = "infeasible: 3*alpha=" + std::to_string(3 * alpha) + " exceeds min proposal length " +
                      std::to_string(min_units);
        } else {
          RunConfig cfg = base;
          set_subnet2_shape(cfg, alpha, n, method);
          cfg.proposals.min_units = min_units;
          try {
            cfg.validate();
            GeminiModel model(cfg.model);
            run_three_step_training(model, data, cfg.training, cfg.proposals);
            const auto dets = detect_split(model, data, "test", cfg);
            const auto eval = evaluate_split(dets, data, "test", {0.1, 0.3, 0.5}, cfg.inference.strict_matching);
            cell.map_01 = eval.map[0];
            cell.map_03 = eval.map[1];
            cell.map_05 = eval.map[2];
          } catch (const ShapeError& e) {
            cell.skipped = true;
            cell.note = std::string("infeasible: ") + e.what();
          }
        }
        cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress) progress(cell);
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const fs::path& path) {
  std::ostringstream os;
  os << "alpha,n,method,status,mAP@0.1,mAP@0.3,mAP@0.5,note\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& c : cells) {
    os << c.alpha << ',' << c.n << ',' << to_string(c.method) << ',' << (c.skipped ? "skipped" : "ok");
    if (c.skipped) {
      os << ",,,";
    } else {
      os << ',' << c.map_01 << ',' << c.map_03 << ',' << c.map_05;
    }
    os << ",\"" << c.note << "\"\n";
  }
  write_text(path, os.str());
}

}  // namespace gemini
