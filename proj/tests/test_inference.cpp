#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gemini/error.hpp"
#include "gemini/inference.hpp"
#include "support.hpp"

using namespace gemini;
using gemini::testing::brute_force_class_ap;
using gemini::testing::greedy_nms_oracle;
using gemini::testing::staircase_ap_oracle;

namespace {

Detection det(const std::string& vid, int64_t s, int64_t e, double score, int cls = 1) {
  Detection d = Detection::make(vid, TemporalInterval(s, e), cls, 0.0, 0.0);
  d.combined_score = score;
  return d;
}

bool same(const Detection& a, const Detection& b) {
  return a.video_id == b.video_id && a.interval == b.interval && a.class_id == b.class_id &&
         a.combined_score == b.combined_score;
}

std::vector<Detection> random_detections(std::mt19937_64& rng, int n, int videos, int classes) {
  std::uniform_int_distribution<int> start(1, 80), len(1, 30), vid(0, videos - 1), cls(1, classes);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) {
    const int s = start(rng);
    out.push_back(det("v" + std::to_string(vid(rng)), s, s + len(rng) - 1, score(rng), cls(rng)));
  }
  return out;
}

}  // namespace

TEST_CASE("score fusion") {
  CHECK(combine_scores(1.0, 0.5) == doctest::Approx(0.5 * std::exp(1.0)).epsilon(1e-15));
  CHECK(combine_scores(1.0, 0.5) == doctest::Approx(1.3591409142));
  CHECK(combine_scores(0.0, 0.0) == 0.0);
  // Log-probabilities map to probabilities.
  CHECK(combine_scores(std::log(0.25), 0.8) == doctest::Approx(0.2));
  const auto d = Detection::make("v", TemporalInterval(1, 5), 2, std::log(0.5), 0.6);
  CHECK(d.combined_score == doctest::Approx(0.3));
  CHECK(d.class_id == 2);
}

TEST_CASE("temporal NMS") {
  SUBCASE("suppresses the lower-ranked overlap") {
    std::vector<Detection> dets = {det("v", 1, 10, 0.9), det("v", 2, 11, 0.8), det("v", 30, 40, 0.7)};
    const auto kept = temporal_nms(dets, 0.2);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].combined_score == 0.9);
    CHECK(kept[1].combined_score == 0.7);
  }
  SUBCASE("boundary overlap is kept at equality") {
    // [1,10] vs [6,15]: 5 / 15 = 1/3.
    std::vector<Detection> dets = {det("v", 1, 10, 0.9), det("v", 6, 15, 0.8)};
    CHECK(temporal_nms(dets, 1.0 / 3.0).size() == 2);
    CHECK(temporal_nms(dets, 0.3).size() == 1);
  }
  SUBCASE("groups are separate") {
    std::vector<Detection> dets = {det("v", 1, 10, 0.9, 1), det("v", 1, 10, 0.8, 2),
                                   det("w", 1, 10, 0.7, 1)};
    CHECK(temporal_nms(dets, 0.2).size() == 3);
  }
  SUBCASE("invalid threshold") {
    std::vector<Detection> dets = {det("v", 1, 10, 0.9)};
    CHECK_THROWS_AS(temporal_nms(dets, 1.5), ConfigError);
  }
  SUBCASE("matches the greedy oracle") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      auto dets = random_detections(rng, 1 + trial % 40, 3, 3);
      const double thr = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
      auto got = temporal_nms(dets, thr);
      auto want = greedy_nms_oracle(dets, thr);
      std::sort(got.begin(), got.end(), ranks_before);
      std::sort(want.begin(), want.end(), ranks_before);
      REQUIRE(got.size() == want.size());
      for (size_t i = 0; i < got.size(); ++i) CHECK(same(got[i], want[i]));

      // Input order does not matter.
      std::shuffle(dets.begin(), dets.end(), rng);
      auto again = temporal_nms(dets, thr);
      std::sort(again.begin(), again.end(), ranks_before);
      REQUIRE(again.size() == got.size());
      for (size_t i = 0; i < got.size(); ++i) CHECK(same(again[i], got[i]));

      // A detection scored below everything never removes a kept one.
      dets.push_back(det("v0", 1, 100, -1.0, 1));
      const auto more = temporal_nms(dets, thr);
      size_t found = 0;
      for (const auto& k : got) {
        found += std::any_of(more.begin(), more.end(), [&](const Detection& m) { return same(m, k); });
      }
      CHECK(found == got.size());
    }
  }
}

TEST_CASE("boundary refinement") {
  const std::vector<Detection> dets = {det("v", 8, 11, 0.5)};
  SUBCASE("decodes the offsets") {
    const std::vector<OffsetPair> reg = {{0.25, std::log(2.0)}};
    const auto out = refine_boundaries(dets, reg);
    CHECK(out[0].interval == TemporalInterval(7, 14));
    CHECK_FALSE(out[0].refine_fallback);
  }
  SUBCASE("zero offsets are the identity") {
    const std::vector<OffsetPair> reg = {{0.0, 0.0}};
    CHECK(refine_boundaries(dets, reg)[0].interval == TemporalInterval(8, 11));
  }
  SUBCASE("degenerate decode falls back") {
    const std::vector<OffsetPair> reg = {{0.0, -10.0}};
    const auto out = refine_boundaries(dets, reg);
    CHECK(out[0].refine_fallback);
    CHECK(out[0].interval == TemporalInterval(8, 11));
  }
  SUBCASE("clips to the video") {
    const std::vector<OffsetPair> reg = {{0.0, std::log(4.0)}};
    const auto out = refine_boundaries(dets, reg, 12);
    CHECK(out[0].interval.end() == 12);
    CHECK(out[0].interval.start() >= 1);
  }
  SUBCASE("count mismatch") { CHECK_THROWS_AS(refine_boundaries(dets, {}), ShapeError); }
}

TEST_CASE("average precision") {
  CHECK(average_precision({true, true}, 2) == 1.0);
  CHECK(average_precision({false, true}, 1) == 0.5);
  CHECK(average_precision({true, false, true}, 2) == doctest::Approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5));
  CHECK(average_precision({}, 3) == 0.0);
  CHECK(average_precision({true}, 0) == 0.0);
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> tp(static_cast<size_t>(1 + trial % 25));
    int hits = 0;
    for (size_t i = 0; i < tp.size(); ++i) hits += (tp[i] = coin(rng));
    const int npos = hits + trial % 3;
    CHECK(std::abs(average_precision(tp, npos) - staircase_ap_oracle(tp, npos)) < 1e-12);
  }
}

TEST_CASE("evaluation") {
  const std::vector<LabeledInstance> gts = {{"a", 1, TemporalInterval(10, 30)},
                                            {"a", 2, TemporalInterval(50, 80)},
                                            {"b", 1, TemporalInterval(5, 25)}};
  const std::vector<double> thr = {0.1, 0.3, 0.5, 0.7};

  SUBCASE("ground truth as detections scores one") {
    std::vector<Detection> dets;
    double s = 1.0;
    for (const auto& g : gts) dets.push_back(det(g.video_id, g.interval.start(), g.interval.end(), s -= 0.1, g.class_id));
    const auto r = evaluate(dets, gts, thr);
    for (double m : r.map) CHECK(m == 1.0);
    CHECK(r.average_map == 1.0);
  }
  SUBCASE("no detections score zero") {
    const auto r = evaluate({}, gts, thr);
    for (double m : r.map) CHECK(m == 0.0);
  }
  SUBCASE("classes without ground truth are excluded") {
    std::vector<Detection> dets = {det("a", 10, 30, 0.9, 1), det("a", 1, 5, 0.8, 7)};
    const auto r = evaluate(dets, gts, thr);
    CHECK(r.excluded_classes == std::vector<int>{7});
    CHECK(r.class_ap.count(7) == 0);
    CHECK(r.class_ap.size() == 2);
  }
  SUBCASE("strict versus inclusive matching") {
    // [10,30] vs [20,39]: 11 / 30.
    const std::vector<LabeledInstance> one = {{"a", 1, TemporalInterval(10, 30)}};
    const std::vector<Detection> d = {det("a", 20, 39, 0.9)};
    const double exact = 11.0 / 30.0;
    CHECK(evaluate(d, one, {exact}).map[0] == 0.0);
    CHECK(evaluate(d, one, {exact}, EvaluationOptions{false}).map[0] == 1.0);
  }
  SUBCASE("duplicates are false positives") {
    const std::vector<LabeledInstance> one = {{"a", 1, TemporalInterval(10, 30)}};
    const std::vector<Detection> d = {det("a", 10, 30, 0.9), det("a", 10, 30, 0.8)};
    CHECK(evaluate(d, one, {0.5}).map[0] == 1.0);
    const std::vector<Detection> flipped = {det("a", 1, 3, 0.95), det("a", 10, 30, 0.8)};
    CHECK(evaluate(flipped, one, {0.5}).map[0] == 0.5);
  }
  SUBCASE("random cases against the brute-force oracle") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> start(1, 60), len(3, 30);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<LabeledInstance> g;
      const int ng = 1 + trial % 5;
      for (int i = 0; i < ng; ++i) {
        const int s = start(rng);
        g.push_back({"v" + std::to_string(i % 2), 1, TemporalInterval(s, s + len(rng))});
      }
      auto d = random_detections(rng, 1 + trial % 20, 2, 1);
      for (double t : {0.1, 0.3, 0.5, 0.7}) {
        const double got = evaluate(d, g, {t}).map[0];
        CHECK(std::abs(got - brute_force_class_ap(d, g, t)) < 1e-9);
      }
    }
  }
  SUBCASE("mAP does not increase with the threshold") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 50; ++trial) {
      auto d = random_detections(rng, 15, 2, 2);
      std::vector<LabeledInstance> g;
      for (int i = 0; i < 4; ++i) {
        const auto& src = d[static_cast<size_t>(i)];
        g.push_back({src.video_id, src.class_id,
                     TemporalInterval(src.interval.start() + 2, src.interval.end() + 3)});
      }
      std::vector<double> ts;
      for (int i = 1; i <= 9; ++i) ts.push_back(0.1 * i);
      const auto r = evaluate(d, g, ts);
      for (size_t i = 1; i < r.map.size(); ++i) CHECK(r.map[i] <= r.map[i - 1] + 1e-12);
    }
  }
  SUBCASE("shifting everything in time changes nothing") {
    std::mt19937_64 rng(31);
    auto d = random_detections(rng, 12, 2, 2);
    std::vector<LabeledInstance> g;
    for (int i = 0; i < 4; ++i) {
      const auto& src = d[static_cast<size_t>(3 * i)];
      g.push_back({src.video_id, src.class_id, TemporalInterval(src.interval.start(), src.interval.end() + 4)});
    }
    auto ds = d;
    auto gs = g;
    for (auto& x : ds) x.interval = TemporalInterval(x.interval.start() + 100, x.interval.end() + 100);
    for (auto& x : gs) x.interval = TemporalInterval(x.interval.start() + 100, x.interval.end() + 100);
    const auto a = evaluate(d, g, thr);
    const auto b = evaluate(ds, gs, thr);
    CHECK(a.map == b.map);
  }
}
