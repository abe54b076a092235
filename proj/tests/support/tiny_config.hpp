#pragma once

#include <filesystem>

#include "hdrtm/training.hpp"

namespace hdrtm::testing {

/// Training setup small enough for CPU tests: 32 px crops, narrow networks, batch 3.
inline TrainConfig tiny_train_config(const std::filesystem::path& dataset, const std::filesystem::path& output,
                                     TrainMode mode = TrainMode::Image) {
  TrainConfig c;
  c.mode = mode;
  c.dataset = dataset;
  c.output = output;
  c.epochs = 1;
  c.seed = 1;
  c.batch.mode = mode;
  c.batch.batch = 3;
  c.batch.negatives = 3;
  c.batch.frames = mode == TrainMode::Video ? 3 : 1;
  c.batch.crop = 32;
  c.generator.base_channels = 8;
  c.generator.num_scales = 3;
  c.generator.sfe_blocks = 1;
  c.generator.sfe_knn = 4;
  c.discriminator.base_channels = 8;
  c.schedule = StageSchedule::fixed();
  c.schedule.lr_g = 1e-3;
  c.schedule.lr_d = 1e-3;
  c.validation_every = 0;
  c.validation_scenes = 1;
  return c;
}

}  // namespace hdrtm::testing
