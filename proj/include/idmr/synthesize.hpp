#pragma once

#include "idmr/disentangle.hpp"

namespace idmr {

// Per-channel style statistics extracted from an ID feature.
template <class T>
struct StyleStatsT {
  Mat<T> mu;     // (C_mc x 1)
  Mat<T> sigma;  // (C_mc x 1), strictly positive
};
using StyleStats = StyleStatsT<float>;

struct DecoderConfig {
  int blocks = 3;                  // each upsamples x2
  std::vector<int> block_channels; // defaults to C_mc everywhere
  double alpha = 0.9;              // image-stream blend weight
  int kernel = 3;
  double lrelu_slope = 0.2;
  double eps = 1e-5;

  void validate(int n_in, int t_out) const;
};

constexpr double kSigmaFloor = 1e-4;

template <class T>
void make_stats_mlp_params(ParamSet<T>& params, int c_id, int c_mc, int hidden, Rng& rng) {
  params.add("stats.w1", init_normal<T>(hidden, c_id, c_id, rng));
  params.add("stats.b1", zeros<T>(hidden, 1));
  params.add("stats.w2", init_normal<T>(2 * c_mc, hidden, hidden, rng));
  params.add("stats.b2", zeros<T>(2 * c_mc, 1));
}

template <class T>
void make_decoder_params(ParamSet<T>& params, int c_mc, int image_channels,
                         const DecoderConfig& cfg, Rng& rng) {
  params.add("dec.tis0.w", init_normal<T>(image_channels, c_mc, c_mc, rng));
  params.add("dec.tis0.b", zeros<T>(image_channels, 1));
  int cin = c_mc;
  for (int b = 0; b < cfg.blocks; ++b) {
    const int cout = cfg.block_channels.empty() ? c_mc : cfg.block_channels[static_cast<size_t>(b)];
    const std::string p = "dec.b" + std::to_string(b);
    params.add(p + ".conv.w", init_normal<T>(cout, cin * cfg.kernel, cin * cfg.kernel, rng));
    params.add(p + ".conv.b", zeros<T>(cout, 1));
    params.add(p + ".tis.w", init_normal<T>(image_channels, cout, cout, rng));
    params.add(p + ".tis.b", zeros<T>(image_channels, 1));
    cin = cout;
  }
  params.add("dec.fis.w", init_normal<T>(c_mc, image_channels, image_channels, rng));
  params.add("dec.fis.b", zeros<T>(c_mc, 1));
}

// Two-layer perceptron from f_bar_id to 2*C_mc numbers; the second half goes
// through softplus with a small floor so sigma stays strictly positive.
template <class T>
struct StyleStatsVars {
  typename Tape<T>::Var mu, sigma;
};

template <class T>
StyleStatsVars<T> id_stats_forward(Tape<T>& tape, const BoundParams<T>& bp,
                                   typename Tape<T>::Var f_bar_id, int c_mc,
                                   double slope = 0.2) {
  auto h = tape.add_colvec(tape.matmul(bp["stats.w1"], f_bar_id), bp["stats.b1"]);
  h = tape.leaky_relu(h, static_cast<T>(slope));
  auto o = tape.add_colvec(tape.matmul(bp["stats.w2"], h), bp["stats.b2"]);
  StyleStatsVars<T> s;
  s.mu = tape.slice_rows(o, 0, c_mc);
  s.sigma = tape.add_scalar(tape.softplus(tape.slice_rows(o, c_mc, c_mc)),
                            static_cast<T>(kSigmaFloor));
  return s;
}

// AdaIN: standardize f_mc over time per channel, then scale/shift with the
// style statistics.
template <class T>
typename Tape<T>::Var adain_forward(Tape<T>& tape, typename Tape<T>::Var f_mc,
                                    typename Tape<T>::Var mu, typename Tape<T>::Var sigma,
                                    T eps = T(1e-5)) {
  const Eigen::Index n = tape.val(f_mc).cols();
  auto z = tape.instance_norm(f_mc, eps);
  auto scaled = tape.mul(z, tape.broadcast_cols(sigma, n));
  return tape.add(scaled, tape.broadcast_cols(mu, n));
}

// Progressive decoder: a feature stream (conv block + x2 upsample per block)
// and an image-space stream y blended with weight alpha. Before the final
// block the upsampled AdaIN output and the image stream (through
// FromImageSpace) are added back into the features.
template <class T>
typename Tape<T>::Var pg_decode_forward(Tape<T>& tape, const BoundParams<T>& bp,
                                        const DecoderConfig& cfg,
                                        typename Tape<T>::Var fused) {
  using Var = typename Tape<T>::Var;
  const T alpha = static_cast<T>(cfg.alpha);
  const int pad = (cfg.kernel - 1) / 2;

  Var y = tape.add_colvec(tape.matmul(bp["dec.tis0.w"], fused), bp["dec.tis0.b"]);
  Var f = fused;
  Var skip = fused;
  for (int b = 0; b < cfg.blocks; ++b) {
    if (b == cfg.blocks - 1 && cfg.blocks > 1) {
      // skip junction: re-inject the fused AdaIN output and the image stream
      Var back = tape.add_colvec(tape.matmul(bp["dec.fis.w"], y), bp["dec.fis.b"]);
      f = tape.add(tape.add(f, skip), back);
    }
    const std::string p = "dec.b" + std::to_string(b);
    f = tape.conv1d(f, bp[p + ".conv.w"], bp[p + ".conv.b"], cfg.kernel, 1, pad);
    f = tape.leaky_relu(f, static_cast<T>(cfg.lrelu_slope));
    f = tape.upsample2(f);
    Var to_img = tape.add_colvec(tape.matmul(bp[p + ".tis.w"], f), bp[p + ".tis.b"]);
    y = tape.add(tape.scale(to_img, alpha), tape.scale(tape.upsample2(y), T(1) - alpha));
    if (b < cfg.blocks - 1) skip = tape.upsample2(skip);
  }
  return y;
}

// ---- plain API ---------------------------------------------------------------

StyleStats id_stats(const MatF& f_bar_id, const Model& model);

template <class T>
Mat<T> adain(const Mat<T>& f_mc, const StyleStatsT<T>& stats, T eps = T(1e-5)) {
  if (stats.mu.rows() != f_mc.rows() || stats.sigma.rows() != f_mc.rows())
    throw ConfigError("adain: style statistics channel count mismatch");
  Tape<T> tape;
  auto out = adain_forward(tape, tape.constant(f_mc), tape.constant(stats.mu),
                           tape.constant(stats.sigma), eps);
  return tape.val(out);
}

MatF pg_decode(const MatF& fused, const Model& model);
MotionClip synthesize(const MatF& f_mc, const MatF& f_bar_id, const Model& model);

}  // namespace idmr
