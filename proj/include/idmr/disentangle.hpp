#pragma once

#include "idmr/dataset.hpp"
#include "idmr/nn.hpp"

#include <optional>

namespace idmr {

// Temporal-convolution encoder description. The standard encoders have eight
// layers with stride 2 at layers 1, 3 and 5 (0-based), giving a total
// downsampling of 8 so the latent width is T/8.
struct EncoderConfig {
  std::vector<int> channels;  // output channels per layer
  std::vector<int> strides;   // per layer
  int kernel = 3;
  double lrelu_slope = 0.2;
  double eps = 1e-5;
  bool with_instance_norm = true;  // true in the MC encoder only
  bool conv_bias = false;          // convs feeding an IN carry no bias

  int layer_count() const { return static_cast<int>(channels.size()); }
  int downsample_factor() const;
  int last_channel() const { return channels.empty() ? 0 : channels.back(); }
  void validate_standard() const;  // 8 layers, stride product 8

  static std::vector<int> geometric_schedule(int first, int last, int n);
  static EncoderConfig standard(int first_channel, int last_channel, bool with_in);
};

// The four latent objects of one clip.
template <class T>
struct LatentBundleT {
  Mat<T> f_mc;      // (C_mc x N)
  Mat<T> f_id;      // (C_id x N)
  Mat<T> f_bar_id;  // (C_id x 1), temporal mean of f_id
  Mat<T> h_id;      // (C_p x 1)
};
using LatentBundle = LatentBundleT<float>;

template <class T>
void make_encoder_params(ParamSet<T>& params, const std::string& prefix, int in_channels,
                         const EncoderConfig& cfg, Rng& rng) {
  int cin = in_channels;
  for (int l = 0; l < cfg.layer_count(); ++l) {
    const int cout = cfg.channels[static_cast<size_t>(l)];
    const int fan_in = cin * cfg.kernel;
    params.add(prefix + ".l" + std::to_string(l) + ".w",
               init_normal<T>(cout, cin * cfg.kernel, fan_in, rng));
    if (cfg.conv_bias)
      params.add(prefix + ".l" + std::to_string(l) + ".b", zeros<T>(cout, 1));
    cin = cout;
  }
}

template <class T>
void make_projection_params(ParamSet<T>& params, int c_id, int c_p, Rng& rng) {
  params.add("proj.w1", init_normal<T>(c_p, c_id, c_id, rng));
  params.add("proj.w2", init_normal<T>(c_p, c_p, c_p, rng));
}

// Per-layer tape trace, exposed so tests can probe internal IN boundaries
// and resume the forward pass from an arbitrary layer.
template <class T>
struct EncoderTrace {
  std::vector<typename Tape<T>::Var> pre_norm;  // post-activation, pre-IN
  std::vector<typename Tape<T>::Var> out;       // layer outputs
};

// Conv -> LeakyReLU -> (optional IN), repeated per layer. `from_layer` and
// `x` let callers re-enter the stack mid-way with a replacement activation:
// when from_pre_norm is true, x is treated as the pre-IN activation of layer
// `from_layer` (only meaningful when the config uses IN).
template <class T>
typename Tape<T>::Var encoder_forward(Tape<T>& tape, const BoundParams<T>& bp,
                                      const std::string& prefix, const EncoderConfig& cfg,
                                      typename Tape<T>::Var x, EncoderTrace<T>* trace = nullptr,
                                      int from_layer = 0, bool from_pre_norm = false) {
  using Var = typename Tape<T>::Var;
  Var h = x;
  for (int l = from_layer; l < cfg.layer_count(); ++l) {
    const bool reenter = (l == from_layer && from_pre_norm);
    if (!reenter) {
      Var w = bp[prefix + ".l" + std::to_string(l) + ".w"];
      std::optional<Var> b;
      if (cfg.conv_bias) b = bp[prefix + ".l" + std::to_string(l) + ".b"];
      const int pad = (cfg.kernel - 1) / 2;
      h = tape.conv1d(h, w, b, cfg.kernel, cfg.strides[static_cast<size_t>(l)], pad);
      h = tape.leaky_relu(h, static_cast<T>(cfg.lrelu_slope));
    }
    if (trace) trace->pre_norm.push_back(h);
    if (cfg.with_instance_norm) h = tape.instance_norm(h, static_cast<T>(cfg.eps));
    if (trace) trace->out.push_back(h);
  }
  return h;
}

// h_id = W2 * LeakyReLU(W1 * f_bar_id); bias-free by construction.
template <class T>
typename Tape<T>::Var projection_forward(Tape<T>& tape, const BoundParams<T>& bp,
                                         typename Tape<T>::Var f_bar_id, double slope = 0.2) {
  auto h = tape.matmul(bp["proj.w1"], f_bar_id);
  h = tape.leaky_relu(h, static_cast<T>(slope));
  return tape.matmul(bp["proj.w2"], h);
}

// ---- plain (inference) API --------------------------------------------------

// Standalone instance normalization, the unit the MC encoder stacks.
template <class T>
Mat<T> instance_norm(const Mat<T>& x, T eps = T(1e-5)) {
  Tape<T> tape;
  return tape.val(tape.instance_norm(tape.constant(x), eps));
}

struct Model;  // defined in model.hpp

MatF encode_mc(const MotionClip& clip, const Model& model);
std::pair<MatF, MatF> encode_id(const MotionClip& clip, const Model& model);
MatF project_id(const MatF& f_bar_id, const MatF& w1, const MatF& w2, double slope = 0.2);
LatentBundle encode(const MotionClip& clip, const Model& model);

// Per-layer MC-encoder activations (pre-IN and post-layer) for a clip.
struct McActivations {
  std::vector<MatF> pre_norm;
  std::vector<MatF> out;
};
McActivations encode_mc_activations(const MotionClip& clip, const Model& model);

// Re-enters the MC encoder at `layer` with a replacement pre-IN activation.
MatF encode_mc_from_pre_norm(const MatF& activation, int layer, const Model& model);

}  // namespace idmr
