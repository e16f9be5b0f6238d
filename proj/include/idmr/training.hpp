#pragma once

#include "idmr/losses.hpp"

#include <filesystem>
#include <functional>

namespace idmr {

struct TrainConfig {
  int batch_size = 128;
  int max_epochs = 2000;
  double ae_lr = 1e-4;
  double d_lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double lr_gamma = 0.5;
  int lr_step_epochs = 400;
  uint64_t seed = 0;
  int steps_per_epoch = 0;  // 0: ceil(train clips / batch_size)
  GanForm gan_form = GanForm::lsgan;
  LossWeights weights;
  int checkpoint_every_epochs = 100;

  static TrainConfig desk_scale();
};

// base * gamma^floor(epoch / step) for both optimizers.
std::pair<double, double> lr_at_epoch(const TrainConfig& cfg, int epoch);

struct StepStats {
  int decoder_invocations = 0;
  int reencode_invocations = 0;
};

struct EpochSummary {
  int epoch = 0;
  double mean_l_rec = 0.0;
  double mean_total = 0.0;
};

struct FitResult {
  std::vector<EpochSummary> epochs;
};

// Owns the model parameters and both optimizers for the three-branch,
// nine-permutation loop. One logical writer; evaluation must snapshot.
class Trainer {
 public:
  Trainer(Model model, TrainConfig cfg, const DatasetIndex& data);

  // One alternating update: discriminator first, then the autoencoder.
  LossReport train_step(const std::vector<TripletSample>& batch);

  // Runs (max_epochs - start_epoch) epochs of seeded shuffled batches.
  // metrics_path: JSONL sink, one record per step (empty: no log).
  // checkpoint_path: periodic + final checkpoint target (empty: none).
  FitResult fit(const std::filesystem::path& metrics_path = {},
                const std::filesystem::path& checkpoint_path = {});

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  void set_max_epochs(int n) { cfg_.max_epochs = n; }  // widen a resumed horizon
  const StepStats& last_step_stats() const { return stats_; }
  int epoch() const { return epoch_; }
  int64_t global_step() const { return global_step_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer load_checkpoint(const std::filesystem::path& path, const DatasetIndex& data);

  void set_manifest_digest(uint64_t d) { manifest_digest_ = d; }

 private:
  Model model_;
  TrainConfig cfg_;
  const DatasetIndex* data_;
  Adam<float> opt_gen_, opt_disc_;
  StepStats stats_;
  int epoch_ = 0;
  int64_t global_step_ = 0;
  uint64_t manifest_digest_ = 0;
  std::map<std::string, int> id_to_int_, mc_to_int_;

  void index_labels();
  std::vector<TripletSample> sample_batch(Rng& rng) const;
  const MotionClip& ground_truth(const TripletSample& t, int j, int k) const;
};

// Standalone checkpoint inspection (model only, no trainer state needed).
Model load_model_from_checkpoint(const std::filesystem::path& path);

}  // namespace idmr
