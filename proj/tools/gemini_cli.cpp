// Command-line driver: generate, train, detect, eval, sweep.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string_view>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gemini/checkpoint.hpp"
#include "gemini/config.hpp"
#include "gemini/dataset_io.hpp"
#include "gemini/error.hpp"
#include "gemini/pipeline.hpp"
#include "gemini/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gemini;

namespace {

constexpr int kUsageError = 2;

/// Usage problems found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path output_path(const std::string& p) {
  const fs::path path(p);
  const char* root = std::getenv("GEMINI_OUTPUT_ROOT");
  if (path.is_absolute() || root == nullptr || *root == '\0') return path;
  return fs::path(root) / path;
}

struct ConfigFlags {
  std::string preset = "tiny5";
  std::string config_file;
  std::string manifest;
  uint64_t seed = 0;
  int alpha = 0, n = 0, batch = 0, min_units = 0, num_train = 0, num_test = 0;
  int iters1 = 0, iters2 = 0, iters3 = 0, capture_base = 0;
  double lr1 = 0, lr2 = 0, lr3 = 0, lambda = 0, mu = 0, aux_weight = 0, ohem = 0, momentum = 0,
         nms = 0, noise = 0, clip = 0;
  std::string pool, tiou_mode, capture;
  bool aux_in_step3 = true, share_streams = false;
  std::vector<CLI::Option*> opts;
  CLI::Option* o_preset{};
  CLI::Option* o_config{};
  CLI::Option* o_manifest{};

  bool given(std::string_view name) const {
    while (!name.empty() && name.front() == '-') name.remove_prefix(1);
    for (auto* o : opts) {
      if (o->check_lname(std::string(name)) && o->count() > 0) return true;
    }
    return false;
  }

  void add(CLI::App* app, bool with_manifest) {
    o_preset = app->add_option("--preset", preset, "Configuration preset (tiny5, pixel-tiny)");
    o_config = app->add_option("--config", config_file, "Run config JSON; replaces the preset");
    o_config->excludes(o_preset);
    if (with_manifest) {
      o_manifest = app->add_option("--manifest", manifest, "Reuse the config recorded in a run manifest");
      o_manifest->excludes(o_preset)->excludes(o_config);
    }
    opts.push_back(app->add_option("--seed", seed, "Master seed for data, init and sampling"));
    opts.push_back(app->add_option("--num-train", num_train, "Synthetic training videos"));
    opts.push_back(app->add_option("--num-test", num_test, "Synthetic test videos"));
    opts.push_back(app->add_option("--noise", noise, "Synthetic noise level"));
    opts.push_back(app->add_option("--alpha", alpha, "Segments per stage"));
    opts.push_back(app->add_option("--n", n, "Recoded dimension"));
    opts.push_back(app->add_option("--pool", pool, "Self-adaptive pooling: average or max"));
    opts.push_back(app->add_option("--capture", capture, "Capture module plan: reference or compact"));
    opts.push_back(app->add_option("--capture-base", capture_base, "Base width of the compact plan"));
    opts.push_back(app->add_flag("--share-streams,!--no-share-streams", share_streams,
                                 "Share Subnet II weights across streams"));
    opts.push_back(app->add_option("--batch-size", batch, "Mini-batch size (multiple of 8)"));
    opts.push_back(app->add_option("--iters1", iters1, "Step 1 iterations"));
    opts.push_back(app->add_option("--iters2", iters2, "Step 2 iterations"));
    opts.push_back(app->add_option("--iters3", iters3, "Step 3 iterations"));
    opts.push_back(app->add_option("--lr1", lr1, "Step 1 learning rate"));
    opts.push_back(app->add_option("--lr2", lr2, "Step 2 learning rate"));
    opts.push_back(app->add_option("--lr3", lr3, "Step 3 learning rate"));
    opts.push_back(app->add_option("--momentum", momentum, "SGD momentum"));
    opts.push_back(app->add_option("--clip-norm", clip, "Gradient norm clip, 0 disables"));
    opts.push_back(app->add_option("--lambda", lambda, "tIoU loss weight"));
    opts.push_back(app->add_option("--mu", mu, "Regression loss weight"));
    opts.push_back(app->add_option("--aux-weight", aux_weight, "Auxiliary loss weight"));
    opts.push_back(app->add_option("--ohem-keep", ohem, "Fraction of tIoU samples kept as hard examples"));
    opts.push_back(app->add_option("--tiou-mode", tiou_mode, "softmax or sigmoid"));
    opts.push_back(app->add_flag("--aux-in-step3,!--no-aux-in-step3", aux_in_step3,
                                 "Keep the auxiliary term in step 3"));
    opts.push_back(app->add_option("--min-units", min_units, "Shortest augmented proposal, in units"));
    opts.push_back(app->add_option("--nms", nms, "NMS tIoU threshold"));
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!manifest.empty()) {
      c = read_manifest(manifest).config;
    } else if (!config_file.empty()) {
      try {
        c = read_json(config_file).get<RunConfig>();
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(config_file + ": " + e.what());
      }
    } else {
      c = preset_config(preset);
    }
    if (given("--seed")) {
      c.data.seed = seed;
      c.model.init_seed = seed + 1;
      c.training.seed = seed + 2;
    }
    if (given("--num-train")) c.data.num_train = num_train;
    if (given("--num-test")) c.data.num_test = num_test;
    if (given("--noise")) c.data.noise = noise;
    if (given("--alpha")) c.model.subnet2.alpha = alpha;
    if (given("--n")) c.model.subnet2.recode_dim = n;
    if (given("--pool")) c.model.subnet2.pool = pool_method_from_string(pool);
    if (given("--capture")) {
      if (capture == "reference") {
        c.model.subnet2.capture = CaptureConfig::reference();
      } else if (capture == "compact") {
        c.model.subnet2.capture = CaptureConfig::compact(given("--capture-base") ? capture_base : 8);
      } else {
        throw UsageError("--capture must be reference or compact");
      }
    } else if (given("--capture-base")) {
      throw UsageError("--capture-base needs --capture compact");
    }
    if (given("--share-streams")) c.model.subnet2.share_streams = share_streams;
    if (given("--batch-size")) c.training.batch_size = batch;
    if (given("--iters1")) c.training.step1.iterations = iters1;
    if (given("--iters2")) c.training.step2.iterations = iters2;
    if (given("--iters3")) c.training.step3.iterations = iters3;
    if (given("--lr1")) c.training.step1.learning_rate = lr1;
    if (given("--lr2")) c.training.step2.learning_rate = lr2;
    if (given("--lr3")) c.training.step3.learning_rate = lr3;
    if (given("--momentum")) c.training.momentum = momentum;
    if (given("--clip-norm")) c.training.clip_norm = clip;
    if (given("--lambda")) c.training.loss.weights.lambda_tiou = lambda;
    if (given("--mu")) c.training.loss.weights.mu_reg = mu;
    if (given("--aux-weight")) c.training.loss.weights.aux_weight = aux_weight;
    if (given("--ohem-keep")) c.training.loss.ohem_keep = ohem;
    if (given("--tiou-mode")) {
      if (tiou_mode != "softmax" && tiou_mode != "sigmoid") throw UsageError("--tiou-mode must be softmax or sigmoid");
      c.training.loss.tiou_mode = tiou_mode == "sigmoid" ? TiouMode::kSigmoid : TiouMode::kSoftmax;
    }
    if (given("--aux-in-step3")) c.training.aux_in_step3 = aux_in_step3;
    if (given("--min-units")) c.proposals.min_units = min_units;
    if (given("--nms")) c.inference.nms_threshold = nms;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    } catch (const ShapeError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

Dataset dataset_for(const RunConfig& config, const std::string& dataset_dir) {
  if (!dataset_dir.empty()) return load_dataset(dataset_dir);
  return generate_synthetic_dataset(config.data);
}

std::vector<int> parse_ints(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("not an integer list: " + csv);
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal action localization: synthetic data, training, detection, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  ConfigFlags gen_flags;
  gen_flags.add(gen, false);
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Run the three-step training schedule");
  ConfigFlags train_flags;
  train_flags.add(train, true);
  std::string train_dataset;
  std::string train_out;
  train->add_option("--dataset", train_dataset, "Dataset directory; default generates from the config");
  train->add_option("--out", train_out, "Run directory")->required();

  // detect
  auto* detect = app.add_subcommand("detect", "Detect actions with a trained run");
  std::string det_run, det_dataset, det_split = "test", det_out, det_metrics, det_checkpoint;
  double det_nms = -1.0;
  detect->add_option("--run", det_run, "Run directory holding manifest.json")->required();
  detect->add_option("--checkpoint", det_checkpoint, "Checkpoint file; default <run>/checkpoints/step3.gckp");
  detect->add_option("--dataset", det_dataset, "Dataset directory; default regenerates from the manifest");
  detect->add_option("--split", det_split, "Split to process");
  detect->add_option("--out", det_out, "Detections JSONL")->required();
  detect->add_option("--metrics", det_metrics, "Also evaluate and write a metrics CSV");
  auto* det_nms_opt = detect->add_option("--nms", det_nms, "NMS tIoU threshold");

  // eval
  auto* eval = app.add_subcommand("eval", "Score detections against annotations");
  std::string ev_dets, ev_dataset, ev_run, ev_split = "test", ev_out;
  bool ev_gt = false, ev_inclusive = false;
  auto* ev_dets_opt = eval->add_option("--detections", ev_dets, "Detections JSONL");
  auto* ev_ds_opt = eval->add_option("--dataset", ev_dataset, "Dataset directory");
  auto* ev_run_opt = eval->add_option("--run", ev_run, "Run directory; regenerates its dataset");
  ev_ds_opt->excludes(ev_run_opt);
  auto* ev_gt_opt = eval->add_flag("--gt-as-detections", ev_gt, "Score the annotations themselves");
  ev_gt_opt->excludes(ev_dets_opt);
  eval->add_flag("--inclusive", ev_inclusive, "Accept tIoU equal to the threshold");
  eval->add_option("--split", ev_split, "Split to score");
  eval->add_option("--out", ev_out, "Metrics CSV")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over an alpha/n/pooling grid");
  ConfigFlags sweep_flags;
  sweep_flags.add(sweep, false);
  std::string sw_alphas = "1,3,9", sw_ns = "17", sw_methods = "average,max", sw_out, sw_dataset;
  int sw_min_units = 0;
  sweep->add_option("--alphas", sw_alphas, "Comma-separated alpha values");
  sweep->add_option("--ns", sw_ns, "Comma-separated n values");
  sweep->add_option("--methods", sw_methods, "Comma-separated pooling methods");
  sweep->add_option("--grid-min-units", sw_min_units, "Shortest proposal every cell sees");
  sweep->add_option("--dataset", sw_dataset, "Dataset directory; default generates from the config");
  sweep->add_option("--out", sw_out, "Sweep CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsageError;
  }

  try {
    if (gen->parsed()) {
      const RunConfig c = gen_flags.resolve();
      const Dataset data = generate_synthetic_dataset(c.data);
      const auto out = output_path(gen_out);
      save_dataset(data, out);
      std::cout << "wrote " << data.videos.size() << " videos to " << out.string() << " (fingerprint "
                << hex64(dataset_fingerprint(data)) << ")\n";
    } else if (train->parsed()) {
      const RunConfig c = train_flags.resolve();
      const Dataset data = dataset_for(c, train_dataset);
      const auto out = output_path(train_out);
      const auto result = train_run(c, data, out);
      const auto& h = result.training.history;
      std::cout << "pool " << result.training.pool_size << " proposals (pos " << result.training.pool_counts[0]
                << ", conf " << result.training.pool_counts[1] << ", bg " << result.training.pool_counts[2]
                << ")\n";
      if (!h.empty()) std::cout << "final " << to_string(h.back().phase) << " loss " << h.back().total << '\n';
      for (const auto& p : result.checkpoints) std::cout << "checkpoint " << p.string() << '\n';
    } else if (detect->parsed()) {
      const fs::path run = output_path(det_run);
      RunConfig c = read_manifest(run / "manifest.json").config;
      if (det_nms_opt->count() > 0) c.inference.nms_threshold = det_nms;
      try {
        c.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      const Dataset data = dataset_for(c, det_dataset);
      GeminiModel model(c.model);
      load_checkpoint(det_checkpoint.empty() ? run / "checkpoints" / "step3.gckp" : fs::path(det_checkpoint),
                      model);
      const auto dets = detect_split(model, data, det_split, c);
      write_detections(dets, output_path(det_out));
      std::cout << "wrote " << dets.size() << " detections\n";
      if (!det_metrics.empty()) {
        const auto r = evaluate_split(dets, data, det_split, c.inference.eval_thresholds, c.inference.strict_matching);
        write_metrics_csv(r, output_path(det_metrics));
        for (size_t i = 0; i < r.thresholds.size(); ++i) {
          std::cout << "mAP@" << r.thresholds[i] << " = " << r.map[i] << '\n';
        }
      }
    } else if (eval->parsed()) {
      if (!ev_gt && ev_dets.empty()) throw UsageError("eval needs --detections or --gt-as-detections");
      if (ev_dataset.empty() && ev_run.empty()) throw UsageError("eval needs --dataset or --run");
      Dataset data;
      std::vector<double> thresholds = InferenceConfig{}.eval_thresholds;
      if (!ev_run.empty()) {
        const RunConfig c = read_manifest(output_path(ev_run) / "manifest.json").config;
        data = generate_synthetic_dataset(c.data);
        thresholds = c.inference.eval_thresholds;
      } else {
        data = load_dataset(ev_dataset);
      }
      const auto dets = ev_gt ? ground_truth_detections(data, ev_split) : read_detections(ev_dets);
      const auto r = evaluate_split(dets, data, ev_split, thresholds, !ev_inclusive);
      write_metrics_csv(r, output_path(ev_out));
      for (size_t i = 0; i < r.thresholds.size(); ++i) {
        std::cout << "mAP@" << r.thresholds[i] << " = " << r.map[i] << '\n';
      }
      std::cout << "average mAP = " << r.average_map << '\n';
      for (int cls : r.excluded_classes) std::cout << "excluded class " << cls << " (no ground truth)\n";
    } else if (sweep->parsed()) {
      const RunConfig c = sweep_flags.resolve();
      const Dataset data = dataset_for(c, sw_dataset);
      SweepOptions opts;
      opts.alphas = parse_ints(sw_alphas);
      opts.ns = parse_ints(sw_ns);
      opts.methods.clear();
      std::stringstream ss(sw_methods);
      std::string m;
      while (std::getline(ss, m, ',')) opts.methods.push_back(pool_method_from_string(m));
      opts.min_units = sw_min_units;
      const auto cells = run_sweep(c, data, opts, [](const SweepCell& cell) {
        std::cout << "alpha=" << cell.alpha << " n=" << cell.n << " " << to_string(cell.method) << ": ";
        if (cell.skipped) {
          std::cout << "skipped (" << cell.note << ")\n";
        } else {
          std::cout << "mAP@0.5 " << cell.map_05 << " in " << cell.seconds << " s\n";
        }
      });
      write_sweep_csv(cells, output_path(sw_out));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
