#include "idmr/model.hpp"

#include <cmath>

namespace idmr {

// ---- EncoderConfig -------------------------------------------------------------

int EncoderConfig::downsample_factor() const {
  int f = 1;
  for (int s : strides) f *= s;
  return f;
}

void EncoderConfig::validate_standard() const {
  if (layer_count() != 8)
    throw ConfigError("EncoderConfig: standard encoder needs 8 layers, got " +
                      std::to_string(layer_count()));
  if (downsample_factor() != 8)
    throw ConfigError("EncoderConfig: stride product must be 8, got " +
                      std::to_string(downsample_factor()));
  if (channels.size() != strides.size())
    throw ConfigError("EncoderConfig: channel/stride schedule length mismatch");
}

std::vector<int> EncoderConfig::geometric_schedule(int first, int last, int n) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double f = (n == 1) ? 1.0 : static_cast<double>(i) / (n - 1);
    out[static_cast<size_t>(i)] =
        static_cast<int>(std::lround(first * std::pow(static_cast<double>(last) / first, f)));
  }
  out.back() = last;
  return out;
}

EncoderConfig EncoderConfig::standard(int first_channel, int last_channel, bool with_in) {
  EncoderConfig cfg;
  cfg.channels = geometric_schedule(first_channel, last_channel, 8);
  // stride 2 at layers 1, 3, 5: total downsampling 8
  cfg.strides = {1, 2, 1, 2, 1, 2, 1, 1};
  cfg.with_instance_norm = with_in;
  cfg.conv_bias = !with_in;
  cfg.validate_standard();
  return cfg;
}

// ---- DecoderConfig -------------------------------------------------------------

void DecoderConfig::validate(int n_in, int t_out) const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("DecoderConfig: alpha must be in [0, 1]");
  if (n_in * (1 << blocks) != t_out)
    throw ConfigError("DecoderConfig: " + std::to_string(blocks) + " x2 blocks map width " +
                      std::to_string(n_in) + " to " + std::to_string(n_in * (1 << blocks)) +
                      ", expected " + std::to_string(t_out));
}

// ---- DiscriminatorConfig -------------------------------------------------------

DiscriminatorConfig DiscriminatorConfig::standard(int first_channel, int last_channel,
                                                  int layers) {
  DiscriminatorConfig cfg;
  cfg.channels = EncoderConfig::geometric_schedule(first_channel, last_channel, layers);
  return cfg;
}

void DiscriminatorConfig::validate_standard() const {
  if (channels.empty()) throw ConfigError("DiscriminatorConfig: empty schedule");
}

// ---- ModelConfig ---------------------------------------------------------------

EncoderConfig ModelConfig::mc_encoder() const {
  auto cfg = EncoderConfig::standard(first_channel, c_mc, /*with_in=*/true);
  cfg.lrelu_slope = lrelu_slope;
  cfg.eps = eps;
  return cfg;
}

EncoderConfig ModelConfig::id_encoder() const {
  auto cfg = EncoderConfig::standard(first_channel, c_id, /*with_in=*/false);
  cfg.lrelu_slope = lrelu_slope;
  cfg.eps = eps;
  return cfg;
}

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig cfg;
  cfg.blocks = decoder_blocks;
  cfg.block_channels.assign(static_cast<size_t>(decoder_blocks), c_mc);
  cfg.alpha = alpha;
  cfg.lrelu_slope = lrelu_slope;
  cfg.eps = eps;
  cfg.validate(latent_width(), frames);
  return cfg;
}

DiscriminatorConfig ModelConfig::discriminator() const {
  auto cfg = DiscriminatorConfig::standard(disc_first, disc_last, 4);
  cfg.lrelu_slope = lrelu_slope;
  return cfg;
}

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_scale(int divisor) {
  ModelConfig cfg;
  cfg.c_mc /= divisor;
  cfg.c_id /= divisor;
  cfg.c_p /= divisor;
  cfg.first_channel /= divisor;
  cfg.stats_hidden /= divisor;
  cfg.disc_first /= divisor;
  cfg.disc_last /= divisor;
  cfg.channel_divisor = divisor;
  cfg.validate();
  return cfg;
}

void ModelConfig::validate() const {
  if (frames % 8 != 0) throw ConfigError("ModelConfig: T must be divisible by 8");
  if (c_mc < 1 || c_id < 1 || c_p < 1) throw ConfigError("ModelConfig: channels must be positive");
  if (frames / 8 * (1 << decoder_blocks) != frames)
    throw ConfigError("ModelConfig: decoder blocks cannot restore T");
}

// ---- Model ---------------------------------------------------------------------

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(mix_seed(seed, 0x90de1));
  make_encoder_params(m.gen, "enc_mc", cfg.input_channels(), cfg.mc_encoder(), rng);
  make_encoder_params(m.gen, "enc_id", cfg.input_channels(), cfg.id_encoder(), rng);
  make_projection_params(m.gen, cfg.c_id, cfg.c_p, rng);
  make_stats_mlp_params(m.gen, cfg.c_id, cfg.c_mc, cfg.stats_hidden, rng);
  make_decoder_params(m.gen, cfg.c_mc, cfg.input_channels(), cfg.decoder(), rng);
  make_discriminator_params(m.disc, cfg.input_channels(), cfg.discriminator(), rng);
  return m;
}

// ---- plain inference API ---------------------------------------------------------

namespace {

void check_clip(const MotionClip& clip, const ModelConfig& cfg, const char* op) {
  if (clip.data.rows() != cfg.input_channels())
    throw ConfigError(std::string(op) + ": clip has " + std::to_string(clip.data.rows()) +
                      " rows, model expects " + std::to_string(cfg.input_channels()));
  if (clip.data.cols() % 8 != 0)
    throw ConfigError(std::string(op) + ": clip width must be divisible by 8");
}

}  // namespace

MatF encode_mc(const MotionClip& clip, const Model& model) {
  check_clip(clip, model.cfg, "encode_mc");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, /*trainable=*/false);
  auto out = encoder_forward(tape, bp, "enc_mc", model.cfg.mc_encoder(),
                             tape.constant(clip.data));
  return tape.val(out);
}

std::pair<MatF, MatF> encode_id(const MotionClip& clip, const Model& model) {
  check_clip(clip, model.cfg, "encode_id");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  auto f_id = encoder_forward(tape, bp, "enc_id", model.cfg.id_encoder(),
                              tape.constant(clip.data));
  auto f_bar = tape.mean_cols(f_id);
  return {tape.val(f_id), tape.val(f_bar)};
}

MatF project_id(const MatF& f_bar_id, const MatF& w1, const MatF& w2, double slope) {
  if (w1.cols() != f_bar_id.rows() || w2.cols() != w1.rows())
    throw ConfigError("project_id: weight dimensions do not chain");
  TapeF tape;
  auto h = tape.matmul(tape.constant(w1), tape.constant(f_bar_id));
  h = tape.leaky_relu(h, static_cast<float>(slope));
  return tape.val(tape.matmul(tape.constant(w2), h));
}

LatentBundle encode(const MotionClip& clip, const Model& model) {
  check_clip(clip, model.cfg, "encode");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  auto b = encode_forward(tape, bp, model.cfg, tape.constant(clip.data));
  return {tape.val(b.f_mc), tape.val(b.f_id), tape.val(b.f_bar_id), tape.val(b.h_id)};
}

McActivations encode_mc_activations(const MotionClip& clip, const Model& model) {
  check_clip(clip, model.cfg, "encode_mc_activations");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  EncoderTrace<float> trace;
  encoder_forward(tape, bp, "enc_mc", model.cfg.mc_encoder(), tape.constant(clip.data), &trace);
  McActivations acts;
  for (auto v : trace.pre_norm) acts.pre_norm.push_back(tape.val(v));
  for (auto v : trace.out) acts.out.push_back(tape.val(v));
  return acts;
}

MatF encode_mc_from_pre_norm(const MatF& activation, int layer, const Model& model) {
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  auto out = encoder_forward(tape, bp, "enc_mc", model.cfg.mc_encoder(),
                             tape.constant(activation), static_cast<EncoderTrace<float>*>(nullptr),
                             layer, /*from_pre_norm=*/true);
  return tape.val(out);
}

StyleStats id_stats(const MatF& f_bar_id, const Model& model) {
  if (f_bar_id.rows() != model.cfg.c_id || f_bar_id.cols() != 1)
    throw ConfigError("id_stats: expected (" + std::to_string(model.cfg.c_id) + " x 1) input");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  auto s = id_stats_forward(tape, bp, tape.constant(f_bar_id), model.cfg.c_mc,
                            model.cfg.lrelu_slope);
  return {tape.val(s.mu), tape.val(s.sigma)};
}

MatF pg_decode(const MatF& fused, const Model& model) {
  if (fused.rows() != model.cfg.c_mc)
    throw ConfigError("pg_decode: expected " + std::to_string(model.cfg.c_mc) + " channels");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  return tape.val(pg_decode_forward(tape, bp, model.cfg.decoder(), tape.constant(fused)));
}

MotionClip synthesize(const MatF& f_mc, const MatF& f_bar_id, const Model& model) {
  if (f_mc.rows() != model.cfg.c_mc)
    throw ConfigError("synthesize: f_mc has " + std::to_string(f_mc.rows()) +
                      " channels, model expects " + std::to_string(model.cfg.c_mc));
  if (f_bar_id.rows() != model.cfg.c_id || f_bar_id.cols() != 1)
    throw ConfigError("synthesize: f_bar_id must be (" + std::to_string(model.cfg.c_id) +
                      " x 1)");
  TapeF tape;
  BoundParams<float> bp(tape, model.gen, false);
  auto out = synthesize_forward(tape, bp, model.cfg, tape.constant(f_mc),
                                tape.constant(f_bar_id));
  MotionClip clip;
  clip.data = tape.val(out);
  return clip;
}

float discriminate(const MatF& clip_data, const Model& model) {
  if (clip_data.rows() != model.cfg.input_channels())
    throw ConfigError("discriminate: clip has " + std::to_string(clip_data.rows()) +
                      " rows, model expects " + std::to_string(model.cfg.input_channels()));
  TapeF tape;
  BoundParams<float> bp(tape, model.disc, false);
  return tape.val(discriminator_forward(tape, bp, model.cfg.discriminator(),
                                        tape.constant(clip_data)))(0, 0);
}

MotionClip retarget(const MotionClip& source, const MotionClip& target, const Model& model) {
  const LatentBundle src = encode(source, model);
  const LatentBundle tgt = encode(target, model);
  MotionClip out = synthesize(src.f_mc, tgt.f_bar_id, model);
  out.id_label = target.id_label;
  out.mc_label = source.mc_label;
  out.fps = source.fps;
  return out;
}

}  // namespace idmr
