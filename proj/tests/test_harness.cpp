#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gemini/checkpoint.hpp"
#include "gemini/config.hpp"
#include "gemini/dataset_io.hpp"
#include "gemini/error.hpp"
#include "gemini/pipeline.hpp"
#include "gemini/synthetic.hpp"
#include "gemini/training.hpp"

using namespace gemini;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gemini_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A reduced tiny5 that trains in a few seconds.
RunConfig small_config() {
  RunConfig c = preset_config("tiny5");
  c.data.num_train = 10;
  c.data.num_test = 4;
  c.training.batch_size = 16;
  c.training.step1 = {3, 0.02};
  c.training.step2 = {3, 0.01};
  c.training.step3 = {3, 0.003};
  return c;
}

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const Parameter* p : params) out.push_back(p->value.storage());
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("synthetic generator") {
  SyntheticConfig cfg;
  cfg.num_train = 6;
  cfg.num_test = 3;

  SUBCASE("deterministic for a seed") {
    const Dataset a = generate_synthetic_dataset(cfg);
    const Dataset b = generate_synthetic_dataset(cfg);
    CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
    cfg.seed = 8;
    CHECK(dataset_fingerprint(generate_synthetic_dataset(cfg)) != dataset_fingerprint(a));
  }
  SUBCASE("annotations are consistent") {
    const Dataset d = generate_synthetic_dataset(cfg);
    REQUIRE(d.videos.size() == 9);
    CHECK(d.split("train").size() == 6);
    CHECK(d.split("test").size() == 3);
    for (const auto& v : d.videos) {
      CHECK(v.frames == cfg.frames_per_video);
      CHECK(static_cast<int64_t>(v.actionness.size()) == d.unit_count(v));
      CHECK(v.spatial_features.dim(0) == d.unit_count(v));
      CHECK(v.spatial_features.dim(1) == cfg.feature_dim);
      REQUIRE(!v.instances.empty());
      CHECK(static_cast<int>(v.instances.size()) <= cfg.max_instances);
      for (size_t i = 0; i < v.instances.size(); ++i) {
        const auto& g = v.instances[i];
        CHECK(g.class_id >= 1);
        CHECK(g.class_id <= cfg.num_classes);
        CHECK(g.interval.duration() >= cfg.min_duration);
        CHECK(g.interval.duration() <= cfg.max_duration);
        CHECK(g.interval.start() >= 1);
        CHECK(g.interval.end() <= v.frames);
        if (i > 0) CHECK(g.interval.start() - v.instances[i - 1].interval.end() - 1 >= cfg.min_separation);
      }
      for (double a : v.actionness) CHECK((a >= 0.0 && a <= 1.0));
    }
  }
  SUBCASE("noise-free units match their class pattern") {
    cfg.noise = 0.0;
    const Dataset d = generate_synthetic_dataset(cfg);
    const ClassPatterns pat = synthetic_patterns(cfg);
    int checked = 0;
    for (const auto& v : d.videos) {
      for (const auto& g : v.instances) {
        // A unit entirely inside the instance.
        const int64_t unit = (g.interval.start() + g.interval.end()) / 2 / d.unit_length;
        const auto row = v.spatial_features.values().subspan(static_cast<size_t>(unit * d.feature_dim),
                                                             static_cast<size_t>(d.feature_dim));
        int best = -1;
        double best_dist = INFINITY;
        for (int c = 0; c <= cfg.num_classes; ++c) {
          const auto p = pat.spatial.values().subspan(static_cast<size_t>(c * d.feature_dim),
                                                      static_cast<size_t>(d.feature_dim));
          const double dist = squared_distance(row, p);
          if (dist < best_dist) {
            best_dist = dist;
            best = c;
          }
        }
        CHECK(best == g.class_id);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }
  SUBCASE("impossible packing") {
    cfg.frames_per_video = 300;
    cfg.min_instances = cfg.max_instances = 3;
    CHECK_THROWS_AS(generate_synthetic_dataset(cfg), GenerationError);
  }
}

TEST_CASE("dataset files round trip") {
  SyntheticConfig cfg;
  cfg.num_train = 3;
  cfg.num_test = 2;
  const Dataset d = generate_synthetic_dataset(cfg);
  const auto dir = scratch("dataset");
  save_dataset(d, dir);
  const Dataset back = load_dataset(dir);
  CHECK(dataset_fingerprint(back) == dataset_fingerprint(d));
  REQUIRE(back.videos.size() == d.videos.size());
  for (size_t i = 0; i < d.videos.size(); ++i) {
    CHECK(back.videos[i].id == d.videos[i].id);
    CHECK(back.videos[i].split == d.videos[i].split);
    CHECK(back.videos[i].spatial_features.storage() == d.videos[i].spatial_features.storage());
    CHECK(back.videos[i].actionness == d.videos[i].actionness);
  }
  const auto json = annotations_to_json(d);
  CHECK(json.at("schema_version") == kSchemaVersion);
  const auto videos = videos_from_annotations(json);
  CHECK(videos[0].instances.size() == d.videos[0].instances.size());
  fs::remove_all(dir);
}

TEST_CASE("detection files round trip") {
  const auto dir = scratch("detections");
  std::vector<Detection> dets = {Detection::make("v1", TemporalInterval(3, 40), 2, -0.3, 0.7),
                                 Detection::make("v2", TemporalInterval(1, 9), 1, -1.5, 0.2)};
  write_detections(dets, dir / "d.jsonl");
  const auto back = read_detections(dir / "d.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].interval == dets[0].interval);
  CHECK(back[1].class_id == 1);
  CHECK(back[0].combined_score == dets[0].combined_score);
  write_text(dir / "bad.jsonl", "{\"video_id\": 3}\n");
  CHECK_THROWS(read_detections(dir / "bad.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("configuration") {
  SUBCASE("presets validate and round trip") {
    for (const auto& name : preset_names()) {
      const RunConfig c = preset_config(name);
      CHECK_NOTHROW(c.validate());
      const nlohmann::json j = c;
      const RunConfig back = j.get<RunConfig>();
      CHECK(nlohmann::json(back) == j);
      CHECK(config_hash(back.model) == config_hash(c.model));
    }
    CHECK_THROWS_AS(preset_config("nope"), ConfigError);
  }
  SUBCASE("manifest records the subnet shape") {
    RunConfig c = preset_config("tiny5");
    set_subnet2_shape(c, 3, 65, PoolMethod::kMax);
    RunManifest m{c, kToolVersion, 42};
    const auto j = manifest_to_json(m);
    CHECK(j.dump().find("\"alpha\":3") != std::string::npos);
    const RunManifest back = manifest_from_json(j);
    CHECK(back.config.model.subnet2.alpha == 3);
    CHECK(back.config.model.subnet2.recode_dim == 65);
    CHECK(back.config.model.subnet2.pool == PoolMethod::kMax);
    CHECK(back.dataset_fingerprint == 42);
  }
  SUBCASE("inconsistent configs are rejected") {
    RunConfig c = preset_config("tiny5");
    c.proposals.min_units = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_config("tiny5");
    c.data.num_classes = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = preset_config("tiny5");
    c.training.batch_size = 12;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("checkpoints") {
  const RunConfig c = preset_config("tiny5");
  GeminiModel model(c.model);
  const auto dir = scratch("checkpoint");
  save_checkpoint(dir / "m.gckp", model, "step2", 17);
  const auto before = snapshot(model.parameters());

  ModelConfig other = c.model;
  other.init_seed = 99;
  GeminiModel fresh(other);
  // Different init seed changes the hash, so loading is refused.
  CHECK_THROWS_AS(load_checkpoint(dir / "m.gckp", fresh), CheckpointError);

  GeminiModel same(c.model);
  for (Parameter* p : same.parameters()) p->value.fill(0.0);
  const auto info = load_checkpoint(dir / "m.gckp", same);
  CHECK(info.phase == "step2");
  CHECK(info.iteration == 17);
  CHECK(snapshot(same.parameters()) == before);

  write_text(dir / "junk.gckp", "not a checkpoint");
  CHECK_THROWS_AS(read_checkpoint_info(dir / "junk.gckp"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("three-step training") {
  const RunConfig c = small_config();
  const Dataset d = generate_synthetic_dataset(c.data);

  SUBCASE("phase order and freezing") {
    GeminiModel model(c.model);
    std::vector<Phase> phases;
    std::vector<std::vector<double>> s1_after_step1, s1_after_step2, s2_after_step1, s2_after_step2;
    const auto result = run_three_step_training(
        model, d, c.training, c.proposals, [&](Phase p, int iters, GeminiModel& m) {
          phases.push_back(p);
          CHECK(iters == 3);
          if (p == Phase::kStep1) {
            s1_after_step1 = snapshot(m.subnet1_parameters());
            s2_after_step1 = snapshot(m.subnet2_parameters());
          } else if (p == Phase::kStep2) {
            s1_after_step2 = snapshot(m.subnet1_parameters());
            s2_after_step2 = snapshot(m.subnet2_parameters());
          }
        });
    CHECK(phases == std::vector<Phase>{Phase::kStep1, Phase::kStep2, Phase::kStep3});
    CHECK(s1_after_step2 == s1_after_step1);
    CHECK(s2_after_step2 != s2_after_step1);
    REQUIRE(result.history.size() == 9);
    CHECK(result.history[0].phase == Phase::kStep1);
    CHECK(result.history[0].auxiliary.has_value());
    CHECK_FALSE(result.history[0].principal.has_value());
    CHECK(result.history[3].phase == Phase::kStep2);
    CHECK(result.history[3].principal.has_value());
    CHECK(result.history[8].phase == Phase::kStep3);
    CHECK(result.pool_size == result.pool_counts[0] + result.pool_counts[1] + result.pool_counts[2]);
    for (size_t k : result.pool_counts) CHECK(k > 0);
  }
  SUBCASE("same seeds give the same model") {
    GeminiModel a(c.model);
    GeminiModel b(c.model);
    run_three_step_training(a, d, c.training, c.proposals);
    run_three_step_training(b, d, c.training, c.proposals);
    CHECK(snapshot(a.parameters()) == snapshot(b.parameters()));
  }
  SUBCASE("divergence is reported") {
    GeminiModel model(c.model);
    model.subnet1_parameters().front()->value[0] = std::nan("");
    CHECK_THROWS_AS(run_three_step_training(model, d, c.training, c.proposals), DivergenceError);
  }
}

TEST_CASE("pipeline") {
  const RunConfig c = small_config();
  const Dataset d = generate_synthetic_dataset(c.data);

  SUBCASE("ground truth scores a perfect mAP") {
    const auto gt = ground_truth_detections(d, "test");
    const auto r = evaluate_split(gt, d, "test", c.inference.eval_thresholds);
    for (double m : r.map) CHECK(m == 1.0);
  }
  SUBCASE("train, reload and detect") {
    const auto dir = scratch("run");
    const auto out = train_run(c, d, dir);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "history.jsonl"));
    CHECK(out.checkpoints.size() == 3);
    const auto manifest = read_manifest(dir / "manifest.json");
    CHECK(manifest.dataset_fingerprint == dataset_fingerprint(d));
    const GeminiModel model = load_trained_model(dir, manifest.config);
    const auto dets = detect_split(model, d, "test", c);
    for (const auto& det : dets) {
      CHECK(det.class_id >= 1);
      CHECK(det.class_id <= c.data.num_classes);
      CHECK(det.interval.start() >= 1);
      CHECK(std::isfinite(det.combined_score));
    }
    for (size_t i = 1; i < dets.size(); ++i) {
      if (dets[i].video_id == dets[i - 1].video_id) CHECK_FALSE(ranks_before(dets[i], dets[i - 1]));
    }
    fs::remove_all(dir);
  }
  SUBCASE("pixel mode runs end to end") {
    const RunConfig p = preset_config("pixel-tiny");
    const Dataset pd = generate_synthetic_dataset(p.data);
    CHECK(pd.videos[0].rgb.rank() == 4);
    GeminiModel model(p.model);
    const auto result = run_three_step_training(model, pd, p.training, p.proposals);
    CHECK(result.history.size() == 12);
    for (const auto& h : result.history) CHECK(std::isfinite(h.total));
    const auto dets = detect_split(model, pd, "test", p);
    for (const auto& det : dets) CHECK(std::isfinite(det.combined_score));
  }
}
