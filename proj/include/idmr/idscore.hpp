#pragma once

#include "idmr/training.hpp"

#include <memory>

namespace idmr {

// Replaceable gait-recognition backbone. Implementations must be
// deterministic with a fixed output dimension; inputs are COCO-17 clips.
class GaitEmbedder {
 public:
  virtual ~GaitEmbedder() = default;
  virtual Eigen::VectorXf embed(const MotionClip& coco17_clip) const = 0;
  virtual int dim() const = 0;
};

struct RankReport {
  double rank1 = 0.0;
  double rank5 = 0.0;
};

struct IdScoreReport {
  RankReport rec;
  RankReport cross;
  double idscore1 = 0.0;
  double idscore5 = 0.0;
};

// idscore_k = rec.rank_k - cross.rank_k.
IdScoreReport make_idscore_report(const RankReport& rec, const RankReport& cross);

void save_idscore_report(const IdScoreReport& r, const std::filesystem::path& path);

// Clip-disjoint gallery/probe split with every identity on both sides.
// Throws naming any identity with fewer than two clips.
std::pair<std::vector<MotionClip>, std::vector<MotionClip>> split_gallery_probe(
    const DatasetIndex& test_set, uint64_t seed);

// ---- keypoint-format remapping ----------------------------------------------

// BODY_25 indices 0..14: nose through ankles, feet/eye-detail joints dropped.
extern const std::array<int, 15> kBody25To15;
// COCO-17 target order; entries index the 15-joint layout, -1 for the four
// eye/ear joints that have no source and must be regressed or interpolated.
extern const std::array<int, 17> kCoco17From15;

MotionClip map_25_to_15(const MotionClip& clip);

// Deterministic baseline: shared joints copied, eyes/ears linearly
// extrapolated from nose and neck.
MotionClip map_15_to_17_baseline(const MotionClip& clip15);

// Learned per-frame 30 -> 34 regression (two bias-free layers).
class Body25To17Mapper {
 public:
  Body25To17Mapper() = default;

  // Supervised pairs: 15-joint inputs and ground-truth 17-joint targets.
  static Body25To17Mapper fit(const std::vector<MotionClip>& clips15,
                              const std::vector<MotionClip>& clips17, uint64_t seed,
                              int hidden = 64, int epochs = 1000, double lr = 1e-2);

  bool trained() const { return w1_.size() > 0; }
  MotionClip apply(const MotionClip& clip15) const;

  // Zero-initialized mapper of the given hidden width (untrained).
  static Body25To17Mapper zero(int hidden = 64);

 private:
  MatF w1_, w2_;
};

// ---- retrieval ---------------------------------------------------------------

// Euclidean ranking on L2-normalized embeddings; ties break by ascending
// gallery index. rank_k hit: any of the k nearest shares the probe identity.
RankReport rank_metrics(const GaitEmbedder& embedder, const std::vector<MotionClip>& gallery,
                        const std::vector<MotionClip>& probe);

// ---- embedders ---------------------------------------------------------------

struct EmbedderFitOptions {
  int embed_dim = 32;
  int epochs = 60;
  int batch_size = 16;
  double lr = 1e-3;
  double margin = 0.2;
};

// Small identity classifier over COCO-17 clips; penultimate activations are
// the embeddings. Stands in for a pretrained gait-recognition network.
class BaselineEmbedder : public GaitEmbedder {
 public:
  using FitOptions = EmbedderFitOptions;

  static BaselineEmbedder fit(const std::vector<MotionClip>& train_coco17,
                              const std::vector<std::string>& id_labels, uint64_t seed,
                              FitOptions opts = FitOptions());

  Eigen::VectorXf embed(const MotionClip& coco17_clip) const override;
  int dim() const override { return opts_.embed_dim; }

 private:
  ParamSet<float> params_;
  DiscriminatorConfig enc_cfg_;  // reuses the conv-stack layout
  FitOptions opts_;

  Eigen::VectorXf raw_embed(const MotionClip& clip) const;
  friend class EmbedderTrainerAccess;
};

// Bridges to an external embedder executable:
//   <path> <input.json> <output.json>
// input: {"clips": [[...34*T floats row-major...], ...], "rows": 34, "cols": T}
// output: {"embeddings": [[...], ...]}
class ExternalEmbedder : public GaitEmbedder {
 public:
  explicit ExternalEmbedder(std::filesystem::path executable);
  Eigen::VectorXf embed(const MotionClip& coco17_clip) const override;
  int dim() const override;

 private:
  std::filesystem::path exe_;
  mutable int dim_ = -1;
};

// ---- the IDScore protocol -----------------------------------------------------

struct IdScoreOptions {
  uint64_t split_seed = 7;
  // 25 -> 15 -> 17 path uses the baseline interpolation unless a mapper is given.
  const Body25To17Mapper* mapper = nullptr;
};

// Reconstruction stage: every probe goes through retarget(m, m). Crossing
// stage: every probe's identity is replaced by the new subject's. Both are
// scored against the raw gallery. The new subject must not appear in the
// gallery identities.
IdScoreReport evaluate_idscore(const Model& model, const DatasetIndex& test_set,
                               const MotionClip& new_subject_clip, const GaitEmbedder& embedder,
                               const IdScoreOptions& opts = {});

// Convenience: BODY_25 clip -> COCO-17 clip along the evaluation path.
MotionClip to_coco17(const MotionClip& body25_clip, const Body25To17Mapper* mapper = nullptr);

}  // namespace idmr
