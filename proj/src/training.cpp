#include "gemini/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gemini/error.hpp"

namespace gemini {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kStep1: return "step1";
    case Phase::kStep2: return "step2";
    case Phase::kStep3: return "step3";
  }
  return "unknown";
}

void TrainingConfig::validate() const {
  if (batch_size < 8 || batch_size % 8 != 0) throw ConfigError("batch_size must be a positive multiple of 8");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  for (const auto* s : {&step1, &step2, &step3}) {
    if (s->iterations < 0) throw ConfigError("iteration counts must be non-negative");
    if (!(s->learning_rate > 0.0) || !std::isfinite(s->learning_rate)) {
      throw ConfigError("learning rates must be positive and finite");
    }
  }
  if (step3_w1 < 0.0 || step3_w2 < 0.0 || std::abs(step3_w1 + step3_w2 - 1.0) > 1e-12) {
    throw ConfigError("step 3 mix weights must be non-negative and sum to 1");
  }
  loss.weights.validate();
  if (!(loss.ohem_keep > 0.0 && loss.ohem_keep <= 1.0)) throw ConfigError("ohem_keep must lie in (0, 1]");
  if (augmentation.jitter_per_instance < 0 || augmentation.random_windows_per_video < 0 ||
      augmentation.max_window_units < 1 || augmentation.jitter_fraction < 0.0) {
    throw ConfigError("invalid proposal pool augmentation");
  }
}

void to_json(nlohmann::json& j, const ProposalConfig& c) {
  j = nlohmann::json{{"tag_thresholds", c.grouping.thresholds},
                     {"merge_gap", c.grouping.merge_gap},
                     {"positive_tiou", c.labels.positive},
                     {"background_tiou", c.labels.background_ceiling},
                     {"min_units", c.min_units}};
}

void from_json(const nlohmann::json& j, ProposalConfig& c) {
  c.grouping.thresholds = j.at("tag_thresholds").get<std::vector<double>>();
  c.grouping.merge_gap = j.at("merge_gap").get<int>();
  c.labels.positive = j.at("positive_tiou").get<double>();
  c.labels.background_ceiling = j.at("background_tiou").get<double>();
  c.min_units = j.at("min_units").get<int>();
}

namespace {

nlohmann::json phase_json(const PhaseSchedule& s) {
  return {{"iterations", s.iterations}, {"learning_rate", s.learning_rate}};
}

PhaseSchedule phase_from(const nlohmann::json& j) {
  return {j.at("iterations").get<int>(), j.at("learning_rate").get<double>()};
}

}  // namespace

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{
      {"seed", c.seed},
      {"batch_size", c.batch_size},
      {"momentum", c.momentum},
      {"clip_norm", c.clip_norm},
      {"step1", phase_json(c.step1)},
      {"step2", phase_json(c.step2)},
      {"step3", phase_json(c.step3)},
      {"step3_mix", {c.step3_w1, c.step3_w2}},
      {"aux_in_step3", c.aux_in_step3},
      {"lambda", c.loss.weights.lambda_tiou},
      {"mu", c.loss.weights.mu_reg},
      {"aux_weight", c.loss.weights.aux_weight},
      {"ohem_keep", c.loss.ohem_keep},
      {"tiou_mode", c.loss.tiou_mode == TiouMode::kSigmoid ? "sigmoid" : "softmax"},
      {"augmentation",
       {{"ground_truth", c.augmentation.ground_truth},
        {"jitter_per_instance", c.augmentation.jitter_per_instance},
        {"jitter_fraction", c.augmentation.jitter_fraction},
        {"random_windows_per_video", c.augmentation.random_windows_per_video},
        {"max_window_units", c.augmentation.max_window_units}}}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  c.seed = j.at("seed").get<uint64_t>();
  c.batch_size = j.at("batch_size").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.step1 = phase_from(j.at("step1"));
  c.step2 = phase_from(j.at("step2"));
  c.step3 = phase_from(j.at("step3"));
  c.step3_w1 = j.at("step3_mix").at(0).get<double>();
  c.step3_w2 = j.at("step3_mix").at(1).get<double>();
  c.aux_in_step3 = j.at("aux_in_step3").get<bool>();
  c.loss.weights.lambda_tiou = j.at("lambda").get<double>();
  c.loss.weights.mu_reg = j.at("mu").get<double>();
  c.loss.weights.aux_weight = j.at("aux_weight").get<double>();
  c.loss.ohem_keep = j.at("ohem_keep").get<double>();
  const auto mode = j.at("tiou_mode").get<std::string>();
  if (mode != "softmax" && mode != "sigmoid") throw ConfigError("unknown tiou_mode " + mode);
  c.loss.tiou_mode = mode == "sigmoid" ? TiouMode::kSigmoid : TiouMode::kSoftmax;
  const auto& a = j.at("augmentation");
  c.augmentation.ground_truth = a.at("ground_truth").get<bool>();
  c.augmentation.jitter_per_instance = a.at("jitter_per_instance").get<int>();
  c.augmentation.jitter_fraction = a.at("jitter_fraction").get<double>();
  c.augmentation.random_windows_per_video = a.at("random_windows_per_video").get<int>();
  c.augmentation.max_window_units = a.at("max_window_units").get<int>();
}

SampleTarget make_target(const LabeledProposal& p) {
  SampleTarget t;
  t.kind = p.kind;
  if (p.kind != ProposalKind::kBackground) t.class_id = p.matched_class.value_or(0);
  if (p.kind == ProposalKind::kPositive) t.offsets = encode_offsets(*p.matched_gt, p.proposal.core);
  return t;
}

std::vector<AugmentedProposal> video_proposals(const Dataset& data, const Video& video,
                                               const ProposalConfig& config, int min_units) {
  const ActionnessTrack track(video.actionness);
  std::vector<AugmentedProposal> out;
  for (const auto& p : actionness_grouping(track, config.grouping.thresholds, config.grouping.merge_gap,
                                           data.unit_length)) {
    auto a = augment_proposal(p, video.frames, data.unit_length);
    if (a.unit_count() >= min_units) out.push_back(a);
  }
  return out;
}

std::vector<TrainingSample> build_training_pool(const Dataset& data,
                                                const std::vector<size_t>& video_indices,
                                                const ProposalConfig& config,
                                                const PoolAugmentation& augmentation, int min_units,
                                                std::mt19937_64& rng) {
  const int nu = data.unit_length;
  std::vector<TrainingSample> pool;
  for (size_t vi : video_indices) {
    const Video& v = data.videos.at(vi);
    const int64_t units = data.unit_count(v);
    if (units < 1) continue;
    auto unit_span = [&](int64_t a, int64_t b) {
      return TemporalInterval((a - 1) * nu + 1, b * nu);
    };
    std::set<TemporalInterval> cores;
    const ActionnessTrack track(v.actionness);
    for (const auto& p : actionness_grouping(track, config.grouping.thresholds, config.grouping.merge_gap, nu)) {
      cores.insert(p);
    }
    for (const auto& g : v.instances) {
      if (augmentation.ground_truth) cores.insert(g.interval);
      const auto [a, b] = overlapping_units(g.interval, nu, units);
      if (a > b) continue;
      const auto span = b - a + 1;
      const auto k = std::max<int64_t>(1, std::llround(augmentation.jitter_fraction * static_cast<double>(span)));
      std::uniform_int_distribution<int64_t> shift(-k, k);
      for (int j = 0; j < augmentation.jitter_per_instance; ++j) {
        const int64_t na = std::clamp<int64_t>(a + shift(rng), 1, units);
        const int64_t nb = std::clamp<int64_t>(b + shift(rng), na, units);
        cores.insert(unit_span(na, nb));
      }
    }
    for (int j = 0; j < augmentation.random_windows_per_video; ++j) {
      const int64_t len = std::uniform_int_distribution<int64_t>(
          1, std::min<int64_t>(units, augmentation.max_window_units))(rng);
      const int64_t start = std::uniform_int_distribution<int64_t>(1, units - len + 1)(rng);
      cores.insert(unit_span(start, start + len - 1));
    }
    std::vector<AugmentedProposal> augmented;
    for (const auto& c : cores) {
      auto a = augment_proposal(c, v.frames, nu);
      if (a.unit_count() >= min_units) augmented.push_back(a);
    }
    for (auto& lp : label_proposals(augmented, v.instances, config.labels)) {
      lp.source = static_cast<int64_t>(vi);
      TrainingSample s{lp, make_target(lp)};
      pool.push_back(std::move(s));
    }
  }
  return pool;
}

ProposalInput proposal_input(const Dataset& data, const Video& video,
                             const AugmentedProposal& proposal, std::mt19937_64* rng) {
  ProposalInput in;
  if (data.mode == BackboneMode::kFeature) {
    in.features = unit_features(data, video, proposal.first_unit, proposal.last_unit);
    return in;
  }
  std::uniform_int_distribution<int> pick(0, data.unit_length - 1);
  for (int64_t u = proposal.first_unit; u <= proposal.last_unit; ++u) {
    const int offset = rng ? pick(*rng) : data.unit_length / 2;
    in.pixels.push_back(pixel_unit(data, video, u, offset));
  }
  return in;
}

nlohmann::json to_json(const HistoryRecord& r) {
  nlohmann::json j = {{"phase", to_string(r.phase)}, {"iteration", r.iteration}, {"L_als", r.als},
                      {"L_tIoU", r.tiou},            {"L_reg", r.reg},             {"total", r.total}};
  j["principal"] = r.principal ? nlohmann::json(*r.principal) : nlohmann::json();
  j["auxiliary"] = r.auxiliary ? nlohmann::json(*r.auxiliary) : nlohmann::json();
  return j;
}

MomentumSgd::MomentumSgd(ParameterList params, double momentum, double clip_norm)
    : params_(std::move(params)), momentum_(momentum), clip_norm_(clip_norm) {}

void MomentumSgd::reset() {
  for (Parameter* p : params_) p->velocity.fill(0.0);
}

void MomentumSgd::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

double MomentumSgd::step(double learning_rate) {
  double sq = 0.0;
  for (const Parameter* p : params_) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double scale = clip_norm_ > 0.0 && norm > clip_norm_ ? clip_norm_ / norm : 1.0;
  for (Parameter* p : params_) {
    auto v = p->velocity.values();
    auto w = p->value.values();
    const auto g = p->grad.values();
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum_ * v[i] + scale * g[i];
      w[i] -= learning_rate * v[i];
    }
  }
  return norm;
}

namespace {

struct PhasePlan {
  Phase phase;
  PhaseSchedule schedule;
  double aux_coef;
  double principal_coef;
  bool into_subnet1;
};

}  // namespace

TrainingResult run_three_step_training(GeminiModel& model, const Dataset& data,
                                       const TrainingConfig& config,
                                       const ProposalConfig& proposals,
                                       const PhaseCallback& on_phase_end) {
  config.validate();
  if (data.feature_dim != model.config().feature_dim() || data.num_classes != model.config().num_classes()) {
    throw ConfigError("dataset dimensions do not match the model config");
  }
  std::vector<size_t> train_videos;
  for (size_t i = 0; i < data.videos.size(); ++i) {
    if (data.videos[i].split == "train") train_videos.push_back(i);
  }
  if (train_videos.empty()) throw ConfigError("dataset has no training videos");

  const int min_units = proposals.effective_min_units(model.config());
  std::mt19937_64 pool_rng(config.seed ^ 0x9001ULL);
  const auto pool = build_training_pool(data, train_videos, proposals, config.augmentation, min_units, pool_rng);
  std::array<std::vector<size_t>, 3> by_kind;
  for (size_t i = 0; i < pool.size(); ++i) by_kind[static_cast<size_t>(pool[i].proposal.kind)].push_back(i);

  TrainingResult result;
  result.pool_size = pool.size();
  for (size_t k = 0; k < 3; ++k) result.pool_counts[k] = by_kind[k].size();

  const double aux_weight = config.loss.weights.aux_weight;
  const std::array<PhasePlan, 3> plans = {
      PhasePlan{Phase::kStep1, config.step1, aux_weight, 0.0, true},
      PhasePlan{Phase::kStep2, config.step2, 0.0, 1.0, false},
      PhasePlan{Phase::kStep3, config.step3, config.aux_in_step3 ? config.step3_w1 * aux_weight : 0.0,
                config.step3_w2, true}};

  std::mt19937_64 rng(config.seed);
  for (const auto& plan : plans) {
    ParameterList params;
    switch (plan.phase) {
      case Phase::kStep1: params = model.subnet1_parameters(); break;
      case Phase::kStep2: params = model.subnet2_parameters(); break;
      case Phase::kStep3: params = model.parameters(); break;
    }
    MomentumSgd opt(params, config.momentum, config.clip_norm);
    opt.reset();
    const bool want_aux = plan.aux_coef > 0.0;
    const bool want_principal = plan.principal_coef > 0.0;
    for (int it = 1; it <= plan.schedule.iterations; ++it) {
      opt.zero_grad();
      const auto batch = sample_minibatch_indices(by_kind, config.batch_size, rng);
      std::vector<GeminiModel::Cache> caches(batch.size());
      std::vector<HeadOutputs> principal_out;
      std::vector<HeadOutputs> aux_out;
      std::vector<SampleTarget> targets;
      for (size_t b = 0; b < batch.size(); ++b) {
        const auto& s = pool[batch[b]];
        const Video& v = data.videos[static_cast<size_t>(s.proposal.source)];
        const auto input = proposal_input(data, v, s.proposal.proposal, &rng);
        auto out = model.forward(s.proposal.proposal, input, want_principal, want_aux, &caches[b]);
        if (want_principal) principal_out.push_back(std::move(out.principal));
        if (want_aux) aux_out.push_back(std::move(out.auxiliary));
        targets.push_back(s.target);
      }

      HistoryRecord rec{plan.phase, it};
      std::vector<HeadGradients> pg;
      std::vector<HeadGradients> ag;
      LossBreakdown shown;
      if (want_aux) {
        const auto aux = multitask_loss(aux_out, targets, config.loss, &ag);
        rec.auxiliary = aux.total;
        rec.total += plan.aux_coef * aux.total;
        shown = aux;
      }
      if (want_principal) {
        const auto prin = multitask_loss(principal_out, targets, config.loss, &pg);
        rec.principal = prin.total;
        rec.total += plan.principal_coef * prin.total;
        shown = prin;
      }
      rec.als = shown.als;
      rec.tiou = shown.tiou;
      rec.reg = shown.reg;
      if (!std::isfinite(rec.total)) {
        throw DivergenceError("non-finite loss in " + to_string(plan.phase) + " at iteration " +
                              std::to_string(it));
      }
      for (size_t b = 0; b < batch.size(); ++b) {
        HeadGradients p_scaled;
        HeadGradients a_scaled;
        if (want_principal) p_scaled = pg[b].scaled(plan.principal_coef);
        if (want_aux) a_scaled = ag[b].scaled(plan.aux_coef);
        model.backward(caches[b], want_principal ? &p_scaled : nullptr, want_aux ? &a_scaled : nullptr,
                       plan.into_subnet1);
      }
      const double norm = opt.step(plan.schedule.learning_rate);
      if (!std::isfinite(norm)) {
        throw DivergenceError("non-finite gradient in " + to_string(plan.phase) + " at iteration " +
                              std::to_string(it));
      }
      result.history.push_back(rec);
    }
    if (on_phase_end) on_phase_end(plan.phase, plan.schedule.iterations, model);
  }
  return result;
}

}  // namespace gemini
