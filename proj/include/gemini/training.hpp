#pragma once

#include <cstdint>
#include <array>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gemini/dataset.hpp"
#include "gemini/losses.hpp"
#include "gemini/model.hpp"
#include "gemini/proposals.hpp"
#include "json.hpp"

namespace gemini {

/// How candidate proposals are produced, labeled and filtered, shared by
/// training and inference.
struct ProposalConfig {
  GroupingOptions grouping;
  LabelThresholds labels;
  // Augmented proposals spanning fewer units are dropped. Zero means 3 alpha.
  int min_units = 0;

  int effective_min_units(const ModelConfig& model) const {
    return min_units > 0 ? min_units : model.min_units();
  }
};

/// Extra training proposals besides the grouped ones.
struct PoolAugmentation {
  bool ground_truth = true;
  int jitter_per_instance = 6;
  double jitter_fraction = 0.3;  // max endpoint shift, as a fraction of the instance length
  int random_windows_per_video = 6;
  int max_window_units = 40;
};

enum class Phase { kStep1 = 1, kStep2 = 2, kStep3 = 3 };

std::string to_string(Phase phase);

struct PhaseSchedule {
  int iterations = 200;
  double learning_rate = 0.01;
};

struct TrainingConfig {
  uint64_t seed = 11;
  int batch_size = 32;
  double momentum = 0.9;
  // Global gradient-norm clip per update; zero disables it.
  double clip_norm = 5.0;
  PhaseSchedule step1{200, 0.02};
  PhaseSchedule step2{400, 0.01};
  PhaseSchedule step3{200, 0.003};
  // Step 3 objective: w1 * (step 1 objective) + w2 * (step 2 objective).
  double step3_w1 = 0.5;
  double step3_w2 = 0.5;
  // With this off, step 3 drops the auxiliary term and optimizes w2 * principal.
  bool aux_in_step3 = true;
  LossOptions loss;
  PoolAugmentation augmentation;

  void validate() const;
};

void to_json(nlohmann::json& j, const ProposalConfig& c);
void from_json(const nlohmann::json& j, ProposalConfig& c);
void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

/// A labeled proposal with its supervision. `proposal.source` indexes the video.
struct TrainingSample {
  LabeledProposal proposal;
  SampleTarget target;
};

SampleTarget make_target(const LabeledProposal& p);

/// Unit-aligned grouped proposals of one video, augmented and filtered by length.
std::vector<AugmentedProposal> video_proposals(const Dataset& data, const Video& video,
                                               const ProposalConfig& config, int min_units);

std::vector<TrainingSample> build_training_pool(const Dataset& data,
                                                const std::vector<size_t>& video_indices,
                                                const ProposalConfig& config,
                                                const PoolAugmentation& augmentation, int min_units,
                                                std::mt19937_64& rng);

/// Model inputs for the units of `proposal`. In pixel mode, `rng` picks the RGB
/// frame of each unit; without it the middle frame is used.
ProposalInput proposal_input(const Dataset& data, const Video& video,
                             const AugmentedProposal& proposal, std::mt19937_64* rng = nullptr);

struct HistoryRecord {
  Phase phase;
  int iteration = 0;  // 1-based within the phase
  double als = 0.0;
  double tiou = 0.0;
  double reg = 0.0;
  std::optional<double> principal;
  std::optional<double> auxiliary;
  double total = 0.0;
};

nlohmann::json to_json(const HistoryRecord& r);

struct TrainingResult {
  std::vector<HistoryRecord> history;
  size_t pool_size = 0;
  std::array<size_t, 3> pool_counts{};  // positive, confusing, background
};

/// Momentum SGD: v <- m v + g, p <- p - lr v.
class MomentumSgd {
 public:
  MomentumSgd(ParameterList params, double momentum, double clip_norm);
  void reset();
  void zero_grad();
  /// Returns the pre-clip gradient norm.
  double step(double learning_rate);

 private:
  ParameterList params_;
  double momentum_;
  double clip_norm_;
};

/// Called after each phase completes.
using PhaseCallback = std::function<void(Phase, int iterations, GeminiModel&)>;

/// Step 1 trains Subnet I and the auxiliary heads, step 2 trains Subnet II
/// with Subnet I frozen, step 3 fine-tunes everything on the mixed objective.
/// Throws DivergenceError on a non-finite loss.
TrainingResult run_three_step_training(GeminiModel& model, const Dataset& data,
                                       const TrainingConfig& config,
                                       const ProposalConfig& proposals,
                                       const PhaseCallback& on_phase_end = {});

}  // namespace gemini
