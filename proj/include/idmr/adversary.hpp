#pragma once

#include "idmr/disentangle.hpp"

namespace idmr {

// Temporal-convolution discriminator: stride-2 conv stack, global temporal
// average, scalar head. No cross-clip normalization, so scores are invariant
// to batch composition.
struct DiscriminatorConfig {
  std::vector<int> channels;  // last entry is the final hidden width
  int kernel = 3;
  double lrelu_slope = 0.2;

  static DiscriminatorConfig standard(int first_channel, int last_channel, int layers = 4);
  void validate_standard() const;  // last hidden channel must be 256 at full scale
};

template <class T>
void make_discriminator_params(ParamSet<T>& params, int in_channels,
                               const DiscriminatorConfig& cfg, Rng& rng) {
  int cin = in_channels;
  for (size_t l = 0; l < cfg.channels.size(); ++l) {
    const int cout = cfg.channels[l];
    params.add("disc.l" + std::to_string(l) + ".w",
               init_normal<T>(cout, cin * cfg.kernel, cin * cfg.kernel, rng));
    params.add("disc.l" + std::to_string(l) + ".b", zeros<T>(cout, 1));
    cin = cout;
  }
  params.add("disc.head.w", init_normal<T>(1, cin, cin, rng));
  params.add("disc.head.b", zeros<T>(1, 1));
}

template <class T>
typename Tape<T>::Var discriminator_forward(Tape<T>& tape, const BoundParams<T>& bp,
                                            const DiscriminatorConfig& cfg,
                                            typename Tape<T>::Var x) {
  using Var = typename Tape<T>::Var;
  Var h = x;
  const int pad = (cfg.kernel - 1) / 2;
  for (size_t l = 0; l < cfg.channels.size(); ++l) {
    const std::string p = "disc.l" + std::to_string(l);
    h = tape.conv1d(h, bp[p + ".w"], bp[p + ".b"], cfg.kernel, 2, pad);
    h = tape.leaky_relu(h, static_cast<T>(cfg.lrelu_slope));
  }
  h = tape.mean_cols(h);
  return tape.add_colvec(tape.matmul(bp["disc.head.w"], h), bp["disc.head.b"]);
}

float discriminate(const MatF& clip_data, const Model& model);

}  // namespace idmr
