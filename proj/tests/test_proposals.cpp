#include <map>
#include <set>
#include <random>

#include "doctest.h"
#include "gemini/error.hpp"
#include "gemini/proposals.hpp"

using namespace gemini;

namespace {

using Run = std::pair<int64_t, int64_t>;

// Maximal runs of scores >= thr, then merged across gaps of <= gap low units.
std::vector<Run> runs_oracle(const std::vector<double>& s, double thr, int gap) {
  std::vector<Run> runs;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] < thr) continue;
    size_t j = i;
    while (j + 1 < s.size() && s[j + 1] >= thr) ++j;
    runs.emplace_back(static_cast<int64_t>(i) + 1, static_cast<int64_t>(j) + 1);
    i = j;
  }
  std::vector<Run> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && r.first - merged.back().second - 1 <= gap) {
      merged.back().second = r.second;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

AugmentedProposal aug(int64_t s, int64_t e) { return augment_proposal(TemporalInterval(s, e), 1000); }

std::vector<LabeledProposal> pool_with(int pos, int conf, int bg) {
  std::vector<LabeledProposal> pool;
  auto add = [&](ProposalKind k, int count, int64_t base) {
    for (int i = 0; i < count; ++i) {
      LabeledProposal lp{aug(base + i, base + i + 5), k, std::nullopt, 0.0, std::nullopt, 0};
      if (k != ProposalKind::kBackground) lp.matched_class = 1;
      pool.push_back(lp);
    }
  };
  add(ProposalKind::kPositive, pos, 100);
  add(ProposalKind::kConfusing, conf, 300);
  add(ProposalKind::kBackground, bg, 600);
  return pool;
}

}  // namespace

TEST_CASE("actionness track range") {
  CHECK_THROWS(ActionnessTrack({0.2, 1.2}));
  CHECK_THROWS(ActionnessTrack({-0.1}));
  CHECK_NOTHROW(ActionnessTrack({0.0, 1.0}));
}

TEST_CASE("actionness grouping examples") {
  const ActionnessTrack all({0.9, 0.9, 0.9});
  CHECK(group_units(all, {0.5}, 0) == std::vector<Run>{{1, 3}});

  const ActionnessTrack split({0.9, 0.9, 0.1, 0.8, 0.8});
  CHECK(group_units(split, {0.5}, 0) == std::vector<Run>{{1, 2}, {4, 5}});
  CHECK(group_units(split, {0.5}, 1) == std::vector<Run>{{1, 5}});

  const auto frames = actionness_grouping(split, {0.5}, 0, 8);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0] == TemporalInterval(1, 16));
  CHECK(frames[1] == TemporalInterval(25, 40));

  CHECK(actionness_grouping(ActionnessTrack({0.1, 0.2}), {0.5}, 1, 4).empty());
  CHECK_THROWS_AS(group_units(split, {}, 0), ConfigError);
  CHECK_THROWS_AS(group_units(split, {1.0}, 0), ConfigError);
}

TEST_CASE("grouping matches the run oracle and is maximal") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> thresholds = {0.3, 0.5, 0.7};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + trial % 40);
    for (double& v : s) v = u(rng);
    const ActionnessTrack track(s);
    for (int gap : {0, 1, 2}) {
      std::set<Run> expected;
      for (double t : thresholds) {
        for (const auto& r : runs_oracle(s, t, gap)) expected.insert(r);
      }
      const auto got = group_units(track, thresholds, gap);
      CHECK(std::set<Run>(got.begin(), got.end()) == expected);
      CHECK(got.size() == expected.size());
    }
    for (double t : thresholds) {
      for (const auto& [a, b] : group_units(track, {t}, 0)) {
        for (int64_t k = a; k <= b; ++k) CHECK(s[static_cast<size_t>(k - 1)] >= t);
        if (a > 1) CHECK(s[static_cast<size_t>(a - 2)] < t);
        if (b < static_cast<int64_t>(s.size())) CHECK(s[static_cast<size_t>(b)] < t);
      }
    }
  }
}

TEST_CASE("label_proposals") {
  const std::vector<GroundTruth> gts = {{TemporalInterval(10, 20), 2}, {TemporalInterval(100, 140), 4}};
  const std::vector<AugmentedProposal> props = {aug(10, 20), aug(60, 80), aug(15, 25), aug(101, 140)};
  const auto labeled = label_proposals(props, gts);
  REQUIRE(labeled.size() == 4);
  CHECK(labeled[0].kind == ProposalKind::kPositive);
  CHECK(labeled[0].best_tiou == 1.0);
  CHECK(labeled[0].matched_class == 2);
  CHECK(labeled[1].kind == ProposalKind::kBackground);
  CHECK(labeled[1].best_tiou == 0.0);
  CHECK_FALSE(labeled[1].matched_class.has_value());
  CHECK(labeled[2].kind == ProposalKind::kConfusing);
  CHECK(labeled[2].best_tiou == doctest::Approx(0.375));
  CHECK(labeled[3].kind == ProposalKind::kPositive);
  CHECK(labeled[3].matched_class == 4);
  CHECK(*labeled[3].matched_gt == TemporalInterval(100, 140));

  CHECK_THROWS_AS(label_proposals(props, gts, LabelThresholds{0.3, 0.5}), ConfigError);
}

TEST_CASE("labeling is a partition consistent with the thresholds") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int64_t> pos(1, 300);
  const std::vector<GroundTruth> gts = {{TemporalInterval(50, 90), 1}, {TemporalInterval(150, 160), 3}};
  std::vector<AugmentedProposal> props;
  for (int i = 0; i < 300; ++i) {
    const int64_t a = pos(rng);
    props.push_back(aug(a, std::min<int64_t>(a + pos(rng) / 4, 300)));
  }
  for (const auto& lp : label_proposals(props, gts)) {
    switch (lp.kind) {
      case ProposalKind::kPositive: CHECK(lp.best_tiou >= 0.7); CHECK(lp.matched_class.has_value()); break;
      case ProposalKind::kBackground: CHECK(lp.best_tiou <= 0.1); break;
      case ProposalKind::kConfusing: CHECK(lp.best_tiou > 0.1); CHECK(lp.best_tiou < 0.7); break;
    }
  }
}

TEST_CASE("sample_minibatch composition") {
  std::mt19937_64 rng(1);
  SUBCASE("128") {
    const auto b = sample_minibatch(pool_with(40, 200, 40), 128, rng);
    CHECK(b.counts == std::array<int, 3>{16, 96, 16});
    CHECK(b.members.size() == 128);
  }
  SUBCASE("8") {
    const auto b = sample_minibatch(pool_with(3, 3, 3), 8, rng);
    CHECK(b.counts == std::array<int, 3>{1, 6, 1});
  }
  SUBCASE("scarce kind drawn with replacement") {
    const auto b = sample_minibatch(pool_with(2, 200, 40), 128, rng);
    std::map<int64_t, int> starts;
    for (const auto& m : b.members) {
      if (m.kind == ProposalKind::kPositive) ++starts[m.proposal.core.start()];
    }
    int total = 0;
    for (const auto& [s, c] : starts) total += c;
    CHECK(total == 16);
    CHECK(starts.size() <= 2);
  }
  SUBCASE("plentiful kind drawn without replacement") {
    const auto b = sample_minibatch(pool_with(40, 200, 40), 128, rng);
    std::set<int64_t> conf;
    for (const auto& m : b.members) {
      if (m.kind == ProposalKind::kConfusing) conf.insert(m.proposal.core.start());
    }
    CHECK(conf.size() == 96);
  }
  SUBCASE("missing kind") {
    try {
      sample_minibatch(pool_with(5, 5, 0), 16, rng);
      FAIL("expected a composition error");
    } catch (const CompositionError& e) {
      CHECK(std::string(e.what()).find("background") != std::string::npos);
    }
  }
  SUBCASE("bad size") { CHECK_THROWS_AS(sample_minibatch(pool_with(5, 5, 5), 12, rng), ConfigError); }
  SUBCASE("seeded determinism") {
    std::mt19937_64 r1(77), r2(77);
    const auto pool = pool_with(20, 60, 20);
    const auto a = sample_minibatch(pool, 64, r1);
    const auto b = sample_minibatch(pool, 64, r2);
    for (size_t i = 0; i < a.members.size(); ++i) {
      CHECK(a.members[i].proposal.core == b.members[i].proposal.core);
    }
  }
}
