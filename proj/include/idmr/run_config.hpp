#pragma once

#include "idmr/training.hpp"

namespace idmr {

// CLI run configuration; JSON file with strict key checking (unknown keys
// are rejected). Every field has a default, so {} is a valid config.
struct SyntheticConfig {
  int n_ids = 6;
  int n_contents = 8;
  int clips_per_cell = 2;
  int test_ids = 2;
  double noise_std = 0.015;
};

struct RunConfig {
  uint64_t seed = 1;
  std::string model_scale = "desk";  // "desk" or "full"
  int channel_divisor = 4;           // used when model_scale == "desk"
  int frames = 64;
  TrainConfig train = TrainConfig::desk_scale();
  SyntheticConfig synthetic;
  uint64_t idscore_split_seed = 7;

  ModelConfig model_config() const;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig defaults() { return RunConfig{}; }
};

}  // namespace idmr
