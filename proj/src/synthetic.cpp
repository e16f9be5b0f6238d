#include "idmr/synthetic.hpp"

#include <cstdio>

namespace idmr {

namespace {

namespace ch = synth_channel;

// Rest angles in image coordinates (x right, y down; straight down = pi/2).
constexpr double kRest[ch::kCount] = {
    0.0,     // torso lean (relative to upright)
    0.0,     // head nod (relative to torso direction)
    1.75,    // right upper arm
    1.66,    // right forearm
    1.39,    // left upper arm
    1.48,    // left forearm
    1.66,    // right thigh
    1.61,    // right shin
    1.48,    // left thigh
    1.53,    // left shin
    0.0,     // root x offset
    0.0,     // root y offset
};

// Per-channel oscillation magnitude before content/identity scaling.
constexpr double kChannelAmp[ch::kCount] = {
    0.10, 0.16, 0.55, 0.65, 0.55, 0.65, 0.32, 0.38, 0.32, 0.38, 0.22, 0.12,
};

// Bone lengths in torso units; identical for every identity so the identity
// signal lives purely in dynamics.
constexpr double kTorso = 1.0;
constexpr double kHead = 0.30;
constexpr double kShoulder = 0.33;
constexpr double kUpperArm = 0.42;
constexpr double kForearm = 0.40;
constexpr double kHipOffset = 0.16;
constexpr double kThigh = 0.55;
constexpr double kShin = 0.50;

inline Eigen::Vector2d dir(double angle) { return {std::cos(angle), std::sin(angle)}; }

}  // namespace

SynthGenerator::SynthGenerator(uint64_t seed, int n_ids, int n_contents)
    : seed_(seed), n_ids_(n_ids), n_contents_(n_contents) {
  if (n_ids < 2 || n_contents < 2)
    throw ConfigError("SynthGenerator: need at least 2 ids and 2 contents");
  contents_.resize(static_cast<size_t>(n_contents));
  for (int c = 0; c < n_contents; ++c) {
    Rng rng(mix_seed(seed, 1000 + static_cast<uint64_t>(c)));
    ContentParams& p = contents_[static_cast<size_t>(c)];
    p.cycles = 2 + c % 4;                       // fundamental cycles per 64 frames
    p.harmonic = rng.uniform(0.15, 0.45);
    for (int k = 0; k < ch::kCount; ++k) {
      p.phase1[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * M_PI);
      p.phase2[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * M_PI);
      p.amp[static_cast<size_t>(k)] = kChannelAmp[k] * rng.uniform(0.7, 1.3);
    }
  }
  styles_.resize(static_cast<size_t>(n_ids));
  for (int i = 0; i < n_ids; ++i) {
    Rng rng(mix_seed(seed, 2000 + static_cast<uint64_t>(i)));
    IdentityStyle& s = styles_[static_cast<size_t>(i)];
    for (int k = 0; k < ch::kCount; ++k) {
      s.amp_scale[static_cast<size_t>(k)] = rng.uniform(0.5, 1.6);
      s.phase[static_cast<size_t>(k)] = rng.uniform(-1.1, 1.1);
      const double bias_range = (k >= ch::kRootX) ? 0.05 : 0.3;
      s.bias[static_cast<size_t>(k)] = rng.uniform(-bias_range, bias_range);
    }
  }
}

double SynthGenerator::rest_angle(int channel) const { return kRest[channel]; }

double SynthGenerator::base_oscillation(int content, int channel, double t,
                                        double extra_phase) const {
  const ContentParams& p = contents_.at(static_cast<size_t>(content));
  const double omega = 2.0 * M_PI * p.cycles / 64.0;
  const double theta = omega * t + extra_phase;
  const size_t k = static_cast<size_t>(channel);
  return p.amp[k] * (std::sin(theta + p.phase1[k]) +
                     p.harmonic * std::sin(2.0 * theta + p.phase2[k]));
}

double SynthGenerator::styled_angle(int id, int content, int channel, double t) const {
  const IdentityStyle& s = styles_.at(static_cast<size_t>(id));
  const size_t k = static_cast<size_t>(channel);
  return kRest[channel] + s.bias[k] +
         s.amp_scale[k] * base_oscillation(content, channel, t, s.phase[k]);
}

MatD SynthGenerator::base_trajectory(int content, int T) const {
  MatD out(ch::kCount, T);
  for (int k = 0; k < ch::kCount; ++k)
    for (int t = 0; t < T; ++t)
      out(k, t) = kRest[k] + base_oscillation(content, k, t, 0.0);
  return out;
}

MatD SynthGenerator::styled_trajectory(int id, int content, int T) const {
  MatD out(ch::kCount, T);
  for (int k = 0; k < ch::kCount; ++k)
    for (int t = 0; t < T; ++t) out(k, t) = styled_angle(id, content, k, t);
  return out;
}

Eigen::VectorXd SynthGenerator::angles_to_keypoints(const Eigen::VectorXd& a) const {
  using V2 = Eigen::Vector2d;
  constexpr int kJ = body25::kJoints;
  std::array<V2, kJ> p;

  const double torso_dir = -M_PI_2 + a[ch::kTorsoLean];
  const V2 root(a[ch::kRootX], a[ch::kRootY]);

  p[8] = root;                                // MidHip
  p[1] = root + kTorso * dir(torso_dir);      // Neck
  const double head_dir = torso_dir + a[ch::kHeadNod];
  p[0] = p[1] + kHead * dir(head_dir);        // Nose

  // eyes/ears rigid in the head frame (linear in nose/neck)
  const V2 u = dir(head_dir);
  const V2 n(-u.y(), u.x());
  p[15] = p[0] + 0.05 * u + 0.055 * n;        // REye
  p[16] = p[0] + 0.05 * u - 0.055 * n;        // LEye
  p[17] = p[0] - 0.02 * u + 0.085 * n;        // REar
  p[18] = p[0] - 0.02 * u - 0.085 * n;        // LEar

  p[2] = p[1] + kShoulder * dir(torso_dir - M_PI_2);  // RShoulder
  p[5] = p[1] + kShoulder * dir(torso_dir + M_PI_2);  // LShoulder
  p[3] = p[2] + kUpperArm * dir(a[ch::kRightUpperArm]);  // RElbow
  p[4] = p[3] + kForearm * dir(a[ch::kRightForearm]);    // RWrist
  p[6] = p[5] + kUpperArm * dir(a[ch::kLeftUpperArm]);   // LElbow
  p[7] = p[6] + kForearm * dir(a[ch::kLeftForearm]);     // LWrist

  p[9] = p[8] + kHipOffset * dir(torso_dir - M_PI_2);   // RHip
  p[12] = p[8] + kHipOffset * dir(torso_dir + M_PI_2);  // LHip
  p[10] = p[9] + kThigh * dir(a[ch::kRightThigh]);      // RKnee
  p[11] = p[10] + kShin * dir(a[ch::kRightShin]);       // RAnkle
  p[13] = p[12] + kThigh * dir(a[ch::kLeftThigh]);      // LKnee
  p[14] = p[13] + kShin * dir(a[ch::kLeftShin]);        // LAnkle

  // feet rigid relative to the shin
  p[24] = p[11] + 0.07 * dir(a[ch::kRightShin] - 2.6);  // RHeel
  p[22] = p[11] + 0.16 * dir(a[ch::kRightShin] + 1.15); // RBigToe
  p[23] = p[22] + 0.05 * dir(a[ch::kRightShin] + 1.55); // RSmallToe
  p[21] = p[14] + 0.07 * dir(a[ch::kLeftShin] + 2.6);   // LHeel
  p[19] = p[14] + 0.16 * dir(a[ch::kLeftShin] - 1.15);  // LBigToe
  p[20] = p[19] + 0.05 * dir(a[ch::kLeftShin] - 1.55);  // LSmallToe

  Eigen::VectorXd out(2 * kJ);
  for (int j = 0; j < kJ; ++j) {
    out[j] = p[static_cast<size_t>(j)].x();
    out[kJ + j] = p[static_cast<size_t>(j)].y();
  }
  return out;
}

std::string SynthGenerator::id_label(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "id%02d", id);
  return buf;
}

std::string SynthGenerator::mc_label(int content) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "mc%02d", content);
  return buf;
}

MotionClip SynthGenerator::make_clip(int id, int content, int clip_index, int T,
                                     double noise_std) const {
  const uint64_t stream = 3000 + ((static_cast<uint64_t>(id) * 1000 +
                                   static_cast<uint64_t>(content)) *
                                      1000 +
                                  static_cast<uint64_t>(clip_index));
  Rng rng(mix_seed(seed_, stream));
  MatD angles = styled_trajectory(id, content, T);
  if (noise_std > 0)
    for (int k = 0; k < angles.rows(); ++k)
      for (int t = 0; t < T; ++t) angles(k, t) += noise_std * rng.normal();

  MotionClip clip;
  clip.data.resize(2 * body25::kJoints, T);
  for (int t = 0; t < T; ++t)
    clip.data.col(t) = angles_to_keypoints(angles.col(t)).cast<float>();
  clip.id_label = id_label(id);
  clip.mc_label = mc_label(content);
  clip.fps = 30.0;
  return normalize(clip);
}

DatasetIndex synth_generate(int n_ids, int n_contents, int T, uint64_t seed,
                            int clips_per_cell, double noise_std) {
  SynthGenerator gen(seed, n_ids, n_contents);
  DatasetIndex index;
  for (int i = 0; i < n_ids; ++i)
    for (int c = 0; c < n_contents; ++c)
      for (int k = 0; k < clips_per_cell; ++k)
        index.add(gen.make_clip(i, c, k, T, noise_std));
  return index;
}

}  // namespace idmr
