#pragma once

#include "idmr/dataset.hpp"

#include <array>

namespace idmr {

// Animated angle/offset channels of the synthetic stick figure.
namespace synth_channel {
constexpr int kTorsoLean = 0;
constexpr int kHeadNod = 1;
constexpr int kRightUpperArm = 2;
constexpr int kRightForearm = 3;
constexpr int kLeftUpperArm = 4;
constexpr int kLeftForearm = 5;
constexpr int kRightThigh = 6;
constexpr int kRightShin = 7;
constexpr int kLeftThigh = 8;
constexpr int kLeftShin = 9;
constexpr int kRootX = 10;
constexpr int kRootY = 11;
constexpr int kCount = 12;
}  // namespace synth_channel

// Identity style: dynamics-only transform of a base content trajectory.
// Bone lengths never change, so identity lives in how a motion is performed.
struct IdentityStyle {
  std::array<double, synth_channel::kCount> amp_scale;
  std::array<double, synth_channel::kCount> phase;  // radians, fundamental
  std::array<double, synth_channel::kCount> bias;
};

// Deterministic identity x content motion grid generator. Content c fixes a
// base oscillation (frequency, harmonic mix, per-channel phases); identity i
// rescales amplitudes, offsets phases and biases the rest posture.
class SynthGenerator {
 public:
  SynthGenerator(uint64_t seed, int n_ids, int n_contents);

  int n_ids() const { return n_ids_; }
  int n_contents() const { return n_contents_; }

  double rest_angle(int channel) const;
  const IdentityStyle& style(int id) const { return styles_.at(static_cast<size_t>(id)); }

  // Base oscillation of a channel at (possibly fractional) frame t, with an
  // extra phase added to the fundamental (the identity phase enters here).
  double base_oscillation(int content, int channel, double t, double extra_phase) const;

  // Styled angle value: rest + bias + amp * base_oscillation(.., phase).
  double styled_angle(int id, int content, int channel, double t) const;

  // (kCount x T) trajectories, no noise.
  MatD base_trajectory(int content, int T) const;
  MatD styled_trajectory(int id, int content, int T) const;

  // Forward kinematics: one angle column -> 2J keypoint column
  // ([x_0..x_24, y_0..y_24]).
  Eigen::VectorXd angles_to_keypoints(const Eigen::VectorXd& angles) const;

  // Full clip with per-clip seeded angle noise, normalized, labeled
  // "id%02d" / "mc%02d".
  MotionClip make_clip(int id, int content, int clip_index, int T, double noise_std = 0.015) const;

  static std::string id_label(int id);
  static std::string mc_label(int content);

 private:
  struct ContentParams {
    int cycles;            // fundamental cycles per 64 frames
    double harmonic;       // second-harmonic weight
    std::array<double, synth_channel::kCount> phase1;
    std::array<double, synth_channel::kCount> phase2;
    std::array<double, synth_channel::kCount> amp;
  };

  uint64_t seed_;
  int n_ids_, n_contents_;
  std::vector<ContentParams> contents_;
  std::vector<IdentityStyle> styles_;
};

// Builds the full grid: every (id, content) cell holds clips_per_cell clips.
// All identities start in the train split; use DatasetIndex::split_by_identity
// to carve out test identities.
DatasetIndex synth_generate(int n_ids, int n_contents, int T, uint64_t seed,
                            int clips_per_cell = 2, double noise_std = 0.015);

}  // namespace idmr
