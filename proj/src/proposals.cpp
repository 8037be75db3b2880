#include "gemini/proposals.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "gemini/error.hpp"

namespace gemini {

ActionnessTrack::ActionnessTrack(std::vector<double> scores) : scores_(std::move(scores)) {
  for (double s : scores_) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error("actionness score outside [0,1]");
  }
}

std::vector<std::pair<int64_t, int64_t>> group_units(const ActionnessTrack& track,
                                                     const std::vector<double>& thresholds,
                                                     int merge_gap) {
  if (thresholds.empty()) throw ConfigError("actionness grouping needs at least one threshold");
  if (merge_gap < 0) throw ConfigError("merge gap must be non-negative");
  const auto& s = track.scores();
  const auto n = static_cast<int64_t>(s.size());
  std::set<std::pair<int64_t, int64_t>> found;
  for (double thr : thresholds) {
    if (!(thr > 0.0 && thr < 1.0)) throw ConfigError("grouping thresholds must lie in (0,1)");
    std::vector<std::pair<int64_t, int64_t>> runs;
    int64_t i = 0;
    while (i < n) {
      if (s[i] < thr) {
        ++i;
        continue;
      }
      int64_t j = i;
      while (j + 1 < n && s[j + 1] >= thr) ++j;
      runs.emplace_back(i + 1, j + 1);
      i = j + 1;
    }
    std::vector<std::pair<int64_t, int64_t>> merged;
    for (const auto& run : runs) {
      if (!merged.empty() && run.first - merged.back().second - 1 <= merge_gap) {
        merged.back().second = run.second;
      } else {
        merged.push_back(run);
      }
    }
    found.insert(merged.begin(), merged.end());
  }
  return {found.begin(), found.end()};
}

std::vector<TemporalInterval> actionness_grouping(const ActionnessTrack& track,
                                                  const std::vector<double>& thresholds,
                                                  int merge_gap, int64_t unit_length) {
  std::vector<TemporalInterval> out;
  for (const auto& [first, last] : group_units(track, thresholds, merge_gap)) {
    out.emplace_back(unit_length * (first - 1) + 1, unit_length * last);
  }
  return out;
}

std::string to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::kPositive:
      return "positive";
    case ProposalKind::kConfusing:
      return "confusing";
    case ProposalKind::kBackground:
      return "background";
  }
  return "unknown";
}

std::vector<LabeledProposal> label_proposals(const std::vector<AugmentedProposal>& proposals,
                                             const std::vector<GroundTruth>& ground_truths,
                                             const LabelThresholds& thresholds) {
  if (!(thresholds.background_ceiling >= 0.0 &&
        thresholds.background_ceiling < thresholds.positive && thresholds.positive <= 1.0)) {
    throw ConfigError("label thresholds must satisfy 0 <= bg_ceiling < pos_thr <= 1");
  }
  std::vector<LabeledProposal> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) {
    LabeledProposal lp{p, ProposalKind::kBackground, std::nullopt, 0.0, std::nullopt};
    const GroundTruth* best = nullptr;
    for (const auto& gt : ground_truths) {
      const double v = tiou(p.core, gt.interval);
      if (v > lp.best_tiou) {
        lp.best_tiou = v;
        best = &gt;
      }
    }
    if (best != nullptr) {
      lp.matched_gt = best->interval;
      lp.matched_class = best->class_id;
    }
    if (lp.best_tiou >= thresholds.positive) {
      lp.kind = ProposalKind::kPositive;
    } else if (lp.best_tiou <= thresholds.background_ceiling) {
      lp.kind = ProposalKind::kBackground;
      lp.matched_class.reset();
    } else {
      lp.kind = ProposalKind::kConfusing;
    }
    out.push_back(std::move(lp));
  }
  return out;
}

namespace {

void draw(const std::vector<size_t>& candidates, int count, std::mt19937_64& rng,
          std::vector<size_t>& out) {
  if (static_cast<int>(candidates.size()) >= count) {
    // Partial Fisher-Yates: uniform subset without replacement.
    std::vector<size_t> work = candidates;
    for (int i = 0; i < count; ++i) {
      std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), work.size() - 1);
      std::swap(work[static_cast<size_t>(i)], work[pick(rng)]);
      out.push_back(work[static_cast<size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
    for (int i = 0; i < count; ++i) out.push_back(candidates[pick(rng)]);
  }
}

}  // namespace

std::vector<size_t> sample_minibatch_indices(const std::array<std::vector<size_t>, 3>& by_kind,
                                             int batch_size, std::mt19937_64& rng) {
  if (batch_size <= 0 || batch_size % 8 != 0) {
    throw ConfigError("batch size must be a positive multiple of 8, got " +
                      std::to_string(batch_size));
  }
  for (int k = 0; k < 3; ++k) {
    if (by_kind[static_cast<size_t>(k)].empty()) {
      throw CompositionError("proposal pool has no " + to_string(static_cast<ProposalKind>(k)) +
                             " proposals");
    }
  }
  const int unit = batch_size / 8;
  const std::array<int, 3> want = {unit, 6 * unit, unit};
  std::vector<size_t> out;
  out.reserve(static_cast<size_t>(batch_size));
  for (size_t k = 0; k < 3; ++k) draw(by_kind[k], want[k], rng, out);
  return out;
}

MiniBatch sample_minibatch(const std::vector<LabeledProposal>& pool, int batch_size,
                           std::mt19937_64& rng) {
  std::array<std::vector<size_t>, 3> by_kind;
  for (size_t i = 0; i < pool.size(); ++i) {
    by_kind[static_cast<size_t>(pool[i].kind)].push_back(i);
  }
  MiniBatch batch;
  for (size_t idx : sample_minibatch_indices(by_kind, batch_size, rng)) {
    batch.members.push_back(pool[idx]);
    ++batch.counts[static_cast<size_t>(pool[idx].kind)];
  }
  return batch;
}

}  // namespace gemini
