#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hdrtm/data.hpp"
#include "hdrtm/losses.hpp"
#include "hdrtm/model.hpp"

namespace hdrtm {

struct Stage {
  int first_epoch = 0;
  std::array<double, 6> lambda{};
  friend bool operator==(const Stage&, const Stage&) = default;
};

/// Stage k covers epochs [stages[k].first_epoch, stages[k+1].first_epoch); the last stage is open-ended.
struct StageSchedule {
  std::vector<Stage> stages;
  double lr_g = 1e-5;
  double lr_d = 1.5e-5;
  int halving_period = 10;
  double adv_weight = kDefaultAdvWeight;

  /// Three stages: base weights, then lambda4 = 0.5 from epoch 7, then lambda5 = 0.5 and lambda6 = 0.2 from epoch 10.
  static StageSchedule staged();
  /// One stage holding `lambda` for every epoch.
  static StageSchedule fixed(std::array<double, 6> lambda = {1.0, 0.5, 0.1, 0.001, 0.001, 0.001});

  /// Throws InvalidConfig unless stages start at 0, increase strictly and all weights are >= 0.
  void validate() const;
  friend bool operator==(const StageSchedule&, const StageSchedule&) = default;
};

void to_json(nlohmann::json& j, const StageSchedule& s);
void from_json(const nlohmann::json& j, StageSchedule& s);

LossWeights stage_weights(int epoch, const StageSchedule& schedule = StageSchedule::staged());

struct LearningRates {
  double generator = 0.0;
  double discriminator = 0.0;
  friend bool operator==(const LearningRates&, const LearningRates&) = default;
};

/// Initial rates halved every halving_period epochs.
LearningRates lr_schedule(int epoch, const StageSchedule& schedule = StageSchedule::staged());

struct LossSettings {
  StructureOptions structure;
  NaturalnessOptions naturalness;
  SimilarityParams similarity;
  /// Quality ranking runs on frames reduced by up to this factor (kept at >= 32 px).
  int ranking_downsample = 4;
  friend bool operator==(const LossSettings& a, const LossSettings& b) {
    return a.structure.patch == b.structure.patch && a.structure.step == b.structure.step &&
           a.structure.scales == b.structure.scales && a.naturalness.patch == b.naturalness.patch &&
           a.naturalness.step == b.naturalness.step && a.similarity.eta == b.similarity.eta &&
           a.similarity.l1_weight == b.similarity.l1_weight && a.ranking_downsample == b.ranking_downsample;
  }
};

void to_json(nlohmann::json& j, const LossSettings& s);
void from_json(const nlohmann::json& j, LossSettings& s);

struct TrainConfig {
  TrainMode mode = TrainMode::Video;
  int epochs = 20;
  std::uint64_t seed = 0;
  std::filesystem::path dataset;   // root with hdr_videos/, hdr_images/, ldr_good/, ldr_poor/
  std::filesystem::path manifest;  // alternative to dataset
  std::filesystem::path output = "run";
  BatchConfig batch;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  StageSchedule schedule = StageSchedule::staged();
  LossSettings loss;
  double grad_clip = 5.0;
  int steps_per_epoch = 0;  // 0: ceil(|hdr pool| / B)
  std::int64_t max_steps = 0;  // 0: epochs * steps_per_epoch
  int validation_every = 200;
  int validation_scenes = 4;
  int checkpoint_every_steps = 0;  // 0: once per epoch
  int max_nonfinite_retries = 3;
  double memory_budget_mb = 0.0;  // 0: unlimited
  bool write_log = true;

  /// Throws InvalidConfig on inconsistent settings.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Unknown keys are rejected with InvalidConfig.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Owns the networks, optimizers and step counter of one training run.
class Trainer {
 public:
  Trainer(TrainConfig config, DatasetManifest manifest);

  /// Discriminator update maximizing the dual contrastive objective on good LDR frames vs
  /// the given generator outputs (detached). Returns the objective before the update.
  double discriminator_step(const TrainingBatch& batch, const torch::Tensor& fake);
  /// Generator loss terms for `batch` (D frozen). `output` receives the generator output.
  LossComponents generator_losses(const TrainingBatch& batch, torch::Tensor* output = nullptr);
  /// One alternating step: generator forward, D update, G update. Non-finite values roll back
  /// both networks and optimizers and throw NonFiniteLoss.
  LossReport train_step(const TrainingBatch& batch, const LossWeights& weights);

  /// Samples the batch for the current step, applies the epoch's weights and rates, and logs.
  LossReport step();
  /// Runs until the configured number of steps; writes checkpoints, log and validation panels.
  void run();

  void save_checkpoint(const std::filesystem::path& dir);
  void load_checkpoint(const std::filesystem::path& dir);
  /// Loads the checkpoint named by <output>/checkpoints/latest.json when present.
  bool resume_latest();

  std::int64_t current_step() const noexcept { return step_; }
  int epoch_of(std::int64_t step) const noexcept;
  std::int64_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  std::int64_t total_steps() const noexcept;
  Generator& generator() noexcept { return generator_; }
  Discriminator& discriminator() noexcept { return discriminator_; }
  const TrainConfig& config() const noexcept { return config_; }
  BatchSampler& sampler() noexcept { return sampler_; }
  void set_learning_rates(const LearningRates& rates);

 private:
  void apply_epoch(int epoch);
  void render_validation();
  void check_memory_budget() const;

  TrainConfig config_;
  BatchSampler sampler_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::int64_t step_ = 0;
  std::int64_t steps_per_epoch_ = 1;
  std::vector<std::size_t> validation_entries_;
};

/// Builds or loads the manifest, resumes from the latest checkpoint when asked, and runs.
void train(const TrainConfig& config, bool resume = false);

/// Latest checkpoint recorded under an output directory, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& output);

}  // namespace hdrtm
