#include "idmr/training.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstring>
#include <fstream>

namespace idmr {

TrainConfig TrainConfig::desk_scale() {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 300;
  cfg.checkpoint_every_epochs = 100;
  // the quarter-width model tolerates (and needs) a larger step size at
  // desk-scale batch sizes; full scale keeps the published rates
  cfg.ae_lr = 3e-4;
  cfg.d_lr = 6e-4;
  return cfg;
}

std::pair<double, double> lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw ConfigError("lr_at_epoch: negative epoch");
  const double f = std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step_epochs));
  return {cfg.ae_lr * f, cfg.d_lr * f};
}

Trainer::Trainer(Model model, TrainConfig cfg, const DatasetIndex& data)
    : model_(std::move(model)), cfg_(cfg), data_(&data) {
  Adam<float>::Config ac;
  ac.beta1 = cfg_.beta1;
  ac.beta2 = cfg_.beta2;
  ac.weight_decay = cfg_.weight_decay;
  ac.lr = cfg_.ae_lr;
  opt_gen_ = Adam<float>(ac);
  opt_gen_.attach(model_.gen);
  ac.lr = cfg_.d_lr;
  opt_disc_ = Adam<float>(ac);
  opt_disc_.attach(model_.disc);
  index_labels();
}

void Trainer::index_labels() {
  id_to_int_.clear();
  mc_to_int_.clear();
  int i = 0;
  for (const auto& id : data_->id_labels()) id_to_int_[id] = i++;
  i = 0;
  for (const auto& mc : data_->mc_labels()) mc_to_int_[mc] = i++;
}

const MotionClip& Trainer::ground_truth(const TripletSample& t, int j, int k) const {
  const std::array<const MotionClip*, 3> branch = {&t.m1, &t.m2, &t.m3};
  const std::string& mc = branch[static_cast<size_t>(j)]->mc_label;
  const std::string& id = branch[static_cast<size_t>(k)]->id_label;
  for (const auto* b : branch)
    if (b->mc_label == mc && b->id_label == id) return *b;
  if (!data_->has_cell(id, mc))
    throw ConfigError("train_step: missing ground truth for (" + id + ", " + mc + ")");
  return data_->cell(id, mc).front();
}

LossReport Trainer::train_step(const std::vector<TripletSample>& batch) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  for (const auto& t : batch)
    if (!triplet_valid(t)) throw ConfigError("train_step: batch violates triplet constraints");

  using Var = TapeF::Var;
  const int B = static_cast<int>(batch.size());
  const ModelConfig& mc_cfg = model_.cfg;
  stats_ = StepStats{};

  TapeF tape;
  BoundParams<float> gen_bp(tape, model_.gen, /*trainable=*/true);

  std::vector<Var> h_embeddings, mc_embeddings;
  std::vector<int> h_labels, mc_labels;
  std::vector<Var> fake_clips;  // all nine syntheses per triplet
  Var l_rec_sum, l_id_rec_sum, l_mc_rec_sum;

  // batch-local label mapping; only equality structure matters
  std::map<std::string, int> bid, bmc;
  auto label_int = [](std::map<std::string, int>& m, const std::string& s) {
    auto it = m.find(s);
    if (it != m.end()) return it->second;
    const int v = static_cast<int>(m.size());
    m[s] = v;
    return v;
  };

  for (int bi = 0; bi < B; ++bi) {
    const TripletSample& trip = batch[static_cast<size_t>(bi)];
    const std::array<const MotionClip*, 3> branch = {&trip.m1, &trip.m2, &trip.m3};

    std::array<BundleVars<float>, 3> bundles;
    for (int i = 0; i < 3; ++i) {
      Var clip = tape.constant(branch[static_cast<size_t>(i)]->data);
      bundles[static_cast<size_t>(i)] = encode_forward(tape, gen_bp, mc_cfg, clip);
      h_embeddings.push_back(bundles[static_cast<size_t>(i)].h_id);
      h_labels.push_back(label_int(bid, branch[static_cast<size_t>(i)]->id_label));
      mc_embeddings.push_back(tape.reshape(bundles[static_cast<size_t>(i)].f_mc,
                                           tape.val(bundles[static_cast<size_t>(i)].f_mc).size(), 1));
      mc_labels.push_back(label_int(bmc, branch[static_cast<size_t>(i)]->mc_label));
    }

    // nine permutations M_sys^{j|k} = S(f_mc^j, f_bar_id^k)
    std::array<std::array<Var, 3>, 3> grid;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        grid[static_cast<size_t>(j)][static_cast<size_t>(k)] =
            synthesize_forward(tape, gen_bp, mc_cfg, bundles[static_cast<size_t>(j)].f_mc,
                               bundles[static_cast<size_t>(k)].f_bar_id);
        ++stats_.decoder_invocations;
        fake_clips.push_back(grid[static_cast<size_t>(j)][static_cast<size_t>(k)]);
      }

    // motion reconstruction over the full grid against dataset ground truth
    Var rec;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const MotionClip& gt = ground_truth(trip, j, k);
        Var term = l1_mean(tape, grid[static_cast<size_t>(j)][static_cast<size_t>(k)],
                           tape.constant(gt.data));
        rec = (j == 0 && k == 0) ? term : tape.add(rec, term);
      }
    rec = tape.scale(rec, 1.0f / 9.0f);
    l_rec_sum = (bi == 0) ? rec : tape.add(l_rec_sum, rec);

    // re-encode the same-index reconstructions for the latent losses
    std::array<BundleVars<float>, 3> resynth;
    for (int i = 0; i < 3; ++i) {
      resynth[static_cast<size_t>(i)] =
          encode_forward(tape, gen_bp, mc_cfg, grid[static_cast<size_t>(i)][static_cast<size_t>(i)]);
      ++stats_.reencode_invocations;
    }

    Var idr = id_reconstruction_node(tape, bundles, resynth);
    l_id_rec_sum = (bi == 0) ? idr : tape.add(l_id_rec_sum, idr);

    std::array<Var, 3> fmc_r, fmc_s;
    for (int i = 0; i < 3; ++i) {
      fmc_r[static_cast<size_t>(i)] = bundles[static_cast<size_t>(i)].f_mc;
      fmc_s[static_cast<size_t>(i)] = resynth[static_cast<size_t>(i)].f_mc;
    }
    Var mcr = branch_l1(tape, fmc_r, fmc_s);
    l_mc_rec_sum = (bi == 0) ? mcr : tape.add(l_mc_rec_sum, mcr);
  }

  const float inv_b = 1.0f / static_cast<float>(B);
  Var l_rec = tape.scale(l_rec_sum, inv_b);
  Var l_id_rec = tape.scale(l_id_rec_sum, inv_b);
  Var l_mc_rec = tape.scale(l_mc_rec_sum, inv_b);

  // batch-gathered BA+ triplet losses
  const float delta = static_cast<float>(cfg_.weights.margin);
  Var l_id_tri = tape.batch_all_triplet(tape.hstack(h_embeddings), h_labels, delta,
                                        1.0f / static_cast<float>(mc_cfg.c_p));
  Var l_mc_tri = tape.batch_all_triplet(
      tape.hstack(mc_embeddings), mc_labels, delta,
      1.0f / static_cast<float>(mc_cfg.c_mc * mc_cfg.latent_width()));

  // ---- discriminator update (fakes detached) -----------------------------
  double l_d = 0.0;
  {
    TapeF dtape;
    BoundParams<float> disc_bp(dtape, model_.disc, /*trainable=*/true);
    std::vector<Var> scores;
    Var d_sum_real, d_sum_fake;
    int n_real = 0, n_fake = 0;
    for (const auto& t : batch)
      for (const auto* clip : {&t.m1, &t.m2, &t.m3}) {
        Var s = discriminator_forward(dtape, disc_bp, mc_cfg.discriminator(),
                                      dtape.constant(clip->data));
        Var term = (cfg_.gan_form == GanForm::lsgan)
                       ? dtape.mul(dtape.add_scalar(s, -1.0f), dtape.add_scalar(s, -1.0f))
                       : dtape.softplus(dtape.scale(s, -1.0f));
        d_sum_real = (n_real == 0) ? term : dtape.add(d_sum_real, term);
        ++n_real;
      }
    for (Var fake : fake_clips) {
      Var s = discriminator_forward(dtape, disc_bp, mc_cfg.discriminator(),
                                    dtape.constant(tape.val(fake)));
      Var term = (cfg_.gan_form == GanForm::lsgan) ? dtape.mul(s, s) : dtape.softplus(s);
      d_sum_fake = (n_fake == 0) ? term : dtape.add(d_sum_fake, term);
      ++n_fake;
    }
    Var d_loss = dtape.add(dtape.scale(d_sum_real, 0.5f / static_cast<float>(n_real)),
                           dtape.scale(d_sum_fake, 0.5f / static_cast<float>(n_fake)));
    dtape.backward(d_loss);
    l_d = static_cast<double>(dtape.val(d_loss)(0, 0));
    std::vector<MatF> grads;
    grads.reserve(model_.disc.count());
    for (size_t i = 0; i < model_.disc.count(); ++i)
      grads.push_back(disc_bp.grad(static_cast<int>(i)));
    opt_disc_.step(model_.disc, grads);
  }

  // ---- generator update (through the freshly updated discriminator) ------
  BoundParams<float> disc_frozen(tape, model_.disc, /*trainable=*/false);
  Var g_sum;
  for (size_t i = 0; i < fake_clips.size(); ++i) {
    Var s = discriminator_forward(tape, disc_frozen, mc_cfg.discriminator(), fake_clips[i]);
    Var term = (cfg_.gan_form == GanForm::lsgan)
                   ? tape.mul(tape.add_scalar(s, -1.0f), tape.add_scalar(s, -1.0f))
                   : tape.softplus(tape.scale(s, -1.0f));
    g_sum = (i == 0) ? term : tape.add(g_sum, term);
  }
  Var l_adv = tape.scale(g_sum, 0.5f / static_cast<float>(fake_clips.size()));

  const LossWeights& w = cfg_.weights;
  Var total = tape.scale(l_rec, static_cast<float>(w.lambda_rec));
  total = tape.add(total, tape.scale(l_adv, static_cast<float>(w.lambda_adv)));
  total = tape.add(total, tape.scale(tape.add(l_mc_rec, l_mc_tri),
                                     static_cast<float>(w.lambda_mc)));
  total = tape.add(total, tape.scale(tape.add(l_id_rec, l_id_tri),
                                     static_cast<float>(w.lambda_id)));

  tape.backward(total);
  std::vector<MatF> grads;
  grads.reserve(model_.gen.count());
  for (size_t i = 0; i < model_.gen.count(); ++i) grads.push_back(gen_bp.grad(static_cast<int>(i)));
  opt_gen_.step(model_.gen, grads);

  LossReport report;
  try {
    report = total_loss(tape.val(l_rec)(0, 0), tape.val(l_adv)(0, 0), tape.val(l_mc_rec)(0, 0),
                        tape.val(l_mc_tri)(0, 0), tape.val(l_id_rec)(0, 0),
                        tape.val(l_id_tri)(0, 0), w, l_d);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at step " + std::to_string(global_step_));
  }
  ++global_step_;
  return report;
}

std::vector<TripletSample> Trainer::sample_batch(Rng& rng) const {
  std::vector<TripletSample> batch;
  batch.reserve(static_cast<size_t>(cfg_.batch_size));
  for (int i = 0; i < cfg_.batch_size; ++i) batch.push_back(sample_triplet(*data_, rng));
  return batch;
}

FitResult Trainer::fit(const std::filesystem::path& metrics_path,
                       const std::filesystem::path& checkpoint_path) {
  FitResult result;
  const int train_clips = static_cast<int>(data_->train_subset().clip_count());
  const int steps = cfg_.steps_per_epoch > 0
                        ? cfg_.steps_per_epoch
                        : std::max(1, (train_clips + cfg_.batch_size - 1) / cfg_.batch_size);

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path, epoch_ == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw FormatError("fit: cannot open metrics log " + metrics_path.string());
  }

  for (; epoch_ < cfg_.max_epochs; ++epoch_) {
    auto [ae_lr, d_lr] = lr_at_epoch(cfg_, epoch_);
    opt_gen_.set_lr(ae_lr);
    opt_disc_.set_lr(d_lr);
    Rng rng(mix_seed(cfg_.seed, 0xE70C0000ULL + static_cast<uint64_t>(epoch_)));

    EpochSummary summary;
    summary.epoch = epoch_;
    for (int s = 0; s < steps; ++s) {
      const auto batch = sample_batch(rng);
      const LossReport r = train_step(batch);
      summary.mean_l_rec += r.l_rec / steps;
      summary.mean_total += r.total / steps;
      if (metrics.is_open()) {
        nlohmann::json j{{"step", global_step_}, {"epoch", epoch_},   {"ae_lr", ae_lr},
                         {"d_lr", d_lr},         {"l_rec", r.l_rec},  {"l_adv", r.l_adv},
                         {"l_d", r.l_d},         {"l_mc_rec", r.l_mc_rec},
                         {"l_mc_tri", r.l_mc_tri}, {"l_id_rec", r.l_id_rec},
                         {"l_id_tri", r.l_id_tri}, {"total", r.total}};
        metrics << j.dump() << "\n";
      }
    }
    result.epochs.push_back(summary);

    if (!checkpoint_path.empty() && cfg_.checkpoint_every_epochs > 0 &&
        (epoch_ + 1) % cfg_.checkpoint_every_epochs == 0)
      save_checkpoint(checkpoint_path);
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path);
  return result;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

constexpr char kMagic[] = "IDMRCKPT1\n";

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"joints", c.joints},       {"frames", c.frames},
          {"c_mc", c.c_mc},           {"c_id", c.c_id},
          {"c_p", c.c_p},             {"first_channel", c.first_channel},
          {"stats_hidden", c.stats_hidden}, {"disc_first", c.disc_first},
          {"disc_last", c.disc_last}, {"alpha", c.alpha},
          {"lrelu_slope", c.lrelu_slope},   {"eps", c.eps},
          {"decoder_blocks", c.decoder_blocks}, {"channel_divisor", c.channel_divisor}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.joints = j.at("joints");
  c.frames = j.at("frames");
  c.c_mc = j.at("c_mc");
  c.c_id = j.at("c_id");
  c.c_p = j.at("c_p");
  c.first_channel = j.at("first_channel");
  c.stats_hidden = j.at("stats_hidden");
  c.disc_first = j.at("disc_first");
  c.disc_last = j.at("disc_last");
  c.alpha = j.at("alpha");
  c.lrelu_slope = j.at("lrelu_slope");
  c.eps = j.at("eps");
  c.decoder_blocks = j.at("decoder_blocks");
  c.channel_divisor = j.at("channel_divisor");
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"ae_lr", c.ae_lr},
          {"d_lr", c.d_lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weight_decay", c.weight_decay},
          {"lr_gamma", c.lr_gamma},
          {"lr_step_epochs", c.lr_step_epochs},
          {"seed", c.seed},
          {"steps_per_epoch", c.steps_per_epoch},
          {"gan_form", c.gan_form == GanForm::lsgan ? "lsgan" : "log"},
          {"checkpoint_every_epochs", c.checkpoint_every_epochs},
          {"lambda_rec", c.weights.lambda_rec},
          {"lambda_adv", c.weights.lambda_adv},
          {"lambda_mc", c.weights.lambda_mc},
          {"lambda_id", c.weights.lambda_id},
          {"margin", c.weights.margin}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size");
  c.max_epochs = j.at("max_epochs");
  c.ae_lr = j.at("ae_lr");
  c.d_lr = j.at("d_lr");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.weight_decay = j.at("weight_decay");
  c.lr_gamma = j.at("lr_gamma");
  c.lr_step_epochs = j.at("lr_step_epochs");
  c.seed = j.at("seed");
  c.steps_per_epoch = j.at("steps_per_epoch");
  c.gan_form = parse_gan_form(j.at("gan_form"));
  c.checkpoint_every_epochs = j.at("checkpoint_every_epochs");
  c.weights.lambda_rec = j.at("lambda_rec");
  c.weights.lambda_adv = j.at("lambda_adv");
  c.weights.lambda_mc = j.at("lambda_mc");
  c.weights.lambda_id = j.at("lambda_id");
  c.weights.margin = j.at("margin");
  return c;
}

nlohmann::json param_shapes(const ParamSet<float>& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : p.entries())
    out.push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}});
  return out;
}

void write_params(std::ostream& out, const ParamSet<float>& p) {
  for (const auto& e : p.entries())
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(sizeof(float) * e.value.size()));
}

void write_moments(std::ostream& out, const std::vector<MatF>& ms) {
  for (const auto& m : ms)
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * m.size()));
}

void read_params(std::istream& in, ParamSet<float>& p) {
  for (auto i = 0u; i < p.count(); ++i) {
    MatF& m = p.value(static_cast<int>(i));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
  }
  if (!in) throw FormatError("checkpoint: truncated parameter block");
}

void read_moments(std::istream& in, std::vector<MatF>& ms) {
  for (auto& m : ms)
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
  if (!in) throw FormatError("checkpoint: truncated optimizer block");
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["format"] = 1;
  header["model_config"] = config_to_json(model_.cfg);
  header["train_config"] = train_config_to_json(cfg_);
  header["epoch"] = epoch_;
  header["global_step"] = global_step_;
  header["manifest_digest"] = manifest_digest_;
  header["gen_params"] = param_shapes(model_.gen);
  header["disc_params"] = param_shapes(model_.disc);
  header["opt_gen_t"] = opt_gen_.step_count();
  header["opt_disc_t"] = opt_disc_.step_count();
  const std::string hs = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("save_checkpoint: cannot write " + tmp);
    out.write(kMagic, static_cast<std::streamsize>(std::strlen(kMagic)));
    const uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_params(out, model_.gen);
    write_moments(out, opt_gen_.moment1());
    write_moments(out, opt_gen_.moment2());
    write_params(out, model_.disc);
    write_moments(out, opt_disc_.moment1());
    write_moments(out, opt_disc_.moment2());
    if (!out) throw FormatError("save_checkpoint: write failure on " + tmp);
  }
  std::filesystem::rename(tmp, path);  // interrupted runs keep the previous file
}

namespace {

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  std::string magic(std::strlen(kMagic), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw FormatError("checkpoint: bad magic in " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint: truncated header in " + path.string());
  return nlohmann::json::parse(hs);
}

void check_shapes(const nlohmann::json& shapes, const ParamSet<float>& p,
                  const std::string& which) {
  if (shapes.size() != p.count())
    throw FormatError("checkpoint: " + which + " block count mismatch");
  for (size_t i = 0; i < p.count(); ++i) {
    const auto& e = p.entries()[i];
    if (shapes[i].at("name") != e.name ||
        shapes[i].at("rows").get<Eigen::Index>() != e.value.rows() ||
        shapes[i].at("cols").get<Eigen::Index>() != e.value.cols())
      throw FormatError("checkpoint: " + which + " shape mismatch at " + e.name);
  }
}

}  // namespace

Trainer Trainer::load_checkpoint(const std::filesystem::path& path, const DatasetIndex& data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path.string());
  const nlohmann::json header = read_header(in, path);

  Model model = Model::init(config_from_json(header.at("model_config")), /*seed=*/0);
  check_shapes(header.at("gen_params"), model.gen, "generator");
  check_shapes(header.at("disc_params"), model.disc, "discriminator");

  Trainer trainer(std::move(model), train_config_from_json(header.at("train_config")), data);
  read_params(in, trainer.model_.gen);
  read_moments(in, trainer.opt_gen_.moment1());
  read_moments(in, trainer.opt_gen_.moment2());
  read_params(in, trainer.model_.disc);
  read_moments(in, trainer.opt_disc_.moment1());
  read_moments(in, trainer.opt_disc_.moment2());
  trainer.epoch_ = header.at("epoch");
  trainer.global_step_ = header.at("global_step");
  trainer.manifest_digest_ = header.at("manifest_digest");
  trainer.opt_gen_.set_step_count(header.at("opt_gen_t"));
  trainer.opt_disc_.set_step_count(header.at("opt_disc_t"));
  return trainer;
}

Model load_model_from_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_model_from_checkpoint: cannot open " + path.string());
  const nlohmann::json header = read_header(in, path);
  Model model = Model::init(config_from_json(header.at("model_config")), 0);
  read_params(in, model.gen);
  // skip generator optimizer moments
  size_t gen_scalars = model.gen.scalar_count();
  in.seekg(static_cast<std::streamoff>(2 * sizeof(float) * gen_scalars), std::ios::cur);
  read_params(in, model.disc);
  return model;
}

}  // namespace idmr
