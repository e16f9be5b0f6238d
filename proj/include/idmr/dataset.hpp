#pragma once

#include "idmr/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace idmr {

// BODY_25 joint indices used across the pipeline.
namespace body25 {
constexpr int kJoints = 25;
constexpr int kNose = 0;
constexpr int kNeck = 1;
constexpr int kMidHip = 8;
}  // namespace body25

// Per-frame keypoints with confidences, straight out of pose estimation.
// frames[t] is (J x 3): columns x, y, confidence.
struct RawSequence {
  std::vector<MatF> frames;
  double fps = 30.0;
  std::string subject_id;
  std::string content_id;  // empty when unknown

  int joints() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }
};

// A joint is missing when its confidence is zero or it sits exactly at the
// pose-estimator null position (0, 0).
inline bool joint_missing(const MatF& frame, int j) {
  return frame(j, 2) == 0.0f || (frame(j, 0) == 0.0f && frame(j, 1) == 0.0f);
}

int missing_count(const MatF& frame);

// Fixed-length keypoint clip, the pipeline currency. Rows are laid out
// [x_0..x_{J-1}, y_0..y_{J-1}], one column per frame.
struct MotionClip {
  MatF data;  // (2J x T)
  std::string id_label;
  std::string mc_label;
  double fps = 30.0;

  int joints() const { return static_cast<int>(data.rows()) / 2; }
  int frames() const { return static_cast<int>(data.cols()); }
};

// Three clips wired for the triplet constraints: m1/m2 share the MC label
// with different ID labels; m2/m3 share the ID label with different MC labels.
struct TripletSample {
  MotionClip m1, m2, m3;
};

bool triplet_valid(const TripletSample& t);

// (id_label, mc_label) grid of clips plus an identity-level train/test split.
class DatasetIndex {
 public:
  using Key = std::pair<std::string, std::string>;  // (id, mc)

  void add(MotionClip clip);

  const std::map<Key, std::vector<MotionClip>>& grid() const { return grid_; }
  std::vector<std::string> id_labels() const;
  std::vector<std::string> mc_labels() const;
  const std::vector<MotionClip>& cell(const std::string& id, const std::string& mc) const;
  bool has_cell(const std::string& id, const std::string& mc) const;
  size_t clip_count() const;

  // Split management. Ids default to train until assigned otherwise.
  void assign_split(const std::string& id, bool test);
  bool is_test(const std::string& id) const { return test_ids_.count(id) > 0; }
  std::set<std::string> train_ids() const;
  const std::set<std::string>& test_ids() const { return test_ids_; }

  // Moves the last n ids of a seeded shuffle into the test split.
  void split_by_identity(int n_test_ids, uint64_t seed);

  DatasetIndex train_subset() const;
  DatasetIndex test_subset() const;
  std::vector<MotionClip> all_clips() const;

 private:
  std::map<Key, std::vector<MotionClip>> grid_;
  std::set<std::string> ids_;
  std::set<std::string> test_ids_;
};

// ---- preprocessing ---------------------------------------------------------

// Drops frames with more than floor(J/3) missing joints; order preserved.
RawSequence clean_frames(const RawSequence& seq);

// Fills every missing joint with the confidence-weighted mean of that joint
// over the frames [t-5, t+5] \ {t} where it is present; falls back to the
// nearest present occurrence anywhere in the sequence. Throws when a joint
// is missing everywhere.
RawSequence pad_missing(const RawSequence& seq);

// Consecutive non-overlapping windows of length T; remainder dropped; each
// clip normalized and labeled from the sequence.
std::vector<MotionClip> trim_clips(const RawSequence& seq, int T = 64);

// Translates the mid-hip temporal mean to the origin and divides by the
// temporal-mean neck-to-mid-hip distance.
MotionClip normalize(const MotionClip& clip);

// Draws a triplet from the train split; deterministic under the rng state.
TripletSample sample_triplet(const DatasetIndex& index, Rng& rng);

// ---- manifest --------------------------------------------------------------

// Writes clips plus a JSON manifest listing (id, mc, path, split).
void save_dataset(const DatasetIndex& index, const std::filesystem::path& dir);
DatasetIndex load_dataset(const std::filesystem::path& manifest_path);
uint64_t manifest_digest(const std::filesystem::path& manifest_path);

}  // namespace idmr
