#pragma once

#include "idmr/adversary.hpp"
#include "idmr/synthesize.hpp"

namespace idmr {

// Architecture constants. Full scale matches the published configuration
// (C_mc = 128, C_id = C_p = 144, discriminator last channel 256); a divisor
// shrinks every channel count for desk-scale runs.
struct ModelConfig {
  int joints = 25;
  int frames = 64;  // T
  int c_mc = 128;
  int c_id = 144;
  int c_p = 144;
  int first_channel = 64;   // encoder schedules rise geometrically from here
  int stats_hidden = 128;
  int disc_first = 32;
  int disc_last = 256;
  double alpha = 0.9;
  double lrelu_slope = 0.2;
  double eps = 1e-5;
  int decoder_blocks = 3;
  int channel_divisor = 1;  // bookkeeping only; factories fold it in

  int input_channels() const { return 2 * joints; }
  int latent_width() const { return frames / 8; }

  EncoderConfig mc_encoder() const;
  EncoderConfig id_encoder() const;
  DecoderConfig decoder() const;
  DiscriminatorConfig discriminator() const;

  static ModelConfig full_scale();
  static ModelConfig desk_scale(int divisor = 4);
  void validate() const;
};

// All learned state: the generator side (both encoders, projection head,
// stats perceptron, decoder) and the discriminator, kept in separate
// parameter sets so optimizer updates cannot cross over.
struct Model {
  ModelConfig cfg;
  ParamSet<float> gen;
  ParamSet<float> disc;

  static Model init(const ModelConfig& cfg, uint64_t seed);
};

// Tape-side full bundle used by the training graph.
template <class T>
struct BundleVars {
  typename Tape<T>::Var f_mc, f_id, f_bar_id, h_id;
};

template <class T>
BundleVars<T> encode_forward(Tape<T>& tape, const BoundParams<T>& bp, const ModelConfig& cfg,
                             typename Tape<T>::Var clip) {
  BundleVars<T> b;
  b.f_mc = encoder_forward(tape, bp, "enc_mc", cfg.mc_encoder(), clip);
  b.f_id = encoder_forward(tape, bp, "enc_id", cfg.id_encoder(), clip);
  b.f_bar_id = tape.mean_cols(b.f_id);
  b.h_id = projection_forward(tape, bp, b.f_bar_id, cfg.lrelu_slope);
  return b;
}

template <class T>
typename Tape<T>::Var synthesize_forward(Tape<T>& tape, const BoundParams<T>& bp,
                                         const ModelConfig& cfg, typename Tape<T>::Var f_mc,
                                         typename Tape<T>::Var f_bar_id) {
  auto stats = id_stats_forward(tape, bp, f_bar_id, cfg.c_mc, cfg.lrelu_slope);
  auto fused = adain_forward(tape, f_mc, stats.mu, stats.sigma, static_cast<T>(cfg.eps));
  return pg_decode_forward(tape, bp, cfg.decoder(), fused);
}

// M_sys = S(E(source).f_mc, E(target).f_bar_id); identity transfer at
// inference time.
MotionClip retarget(const MotionClip& source, const MotionClip& target, const Model& model);

}  // namespace idmr
