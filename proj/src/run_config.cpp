#include "idmr/run_config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace idmr {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg = (model_scale == "full") ? ModelConfig::full_scale()
                                            : ModelConfig::desk_scale(channel_divisor);
  cfg.frames = frames;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);

  RunConfig cfg;
  reject_unknown(j, {"seed", "model", "train", "synthetic", "idscore"}, "top level");
  maybe(j, "seed", cfg.seed);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"scale", "channel_divisor", "frames"}, "model");
    maybe(m, "scale", cfg.model_scale);
    if (cfg.model_scale != "desk" && cfg.model_scale != "full")
      throw ConfigError("config: model.scale must be 'desk' or 'full'");
    maybe(m, "channel_divisor", cfg.channel_divisor);
    maybe(m, "frames", cfg.frames);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t,
                   {"batch_size", "max_epochs", "ae_lr", "d_lr", "beta1", "beta2",
                    "weight_decay", "lr_gamma", "lr_step_epochs", "steps_per_epoch",
                    "gan_form", "checkpoint_every_epochs", "lambda_rec", "lambda_adv",
                    "lambda_mc", "lambda_id", "margin"},
                   "train");
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "max_epochs", cfg.train.max_epochs);
    maybe(t, "ae_lr", cfg.train.ae_lr);
    maybe(t, "d_lr", cfg.train.d_lr);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "weight_decay", cfg.train.weight_decay);
    maybe(t, "lr_gamma", cfg.train.lr_gamma);
    maybe(t, "lr_step_epochs", cfg.train.lr_step_epochs);
    maybe(t, "steps_per_epoch", cfg.train.steps_per_epoch);
    if (t.contains("gan_form")) cfg.train.gan_form = parse_gan_form(t.at("gan_form"));
    maybe(t, "checkpoint_every_epochs", cfg.train.checkpoint_every_epochs);
    maybe(t, "lambda_rec", cfg.train.weights.lambda_rec);
    maybe(t, "lambda_adv", cfg.train.weights.lambda_adv);
    maybe(t, "lambda_mc", cfg.train.weights.lambda_mc);
    maybe(t, "lambda_id", cfg.train.weights.lambda_id);
    maybe(t, "margin", cfg.train.weights.margin);
  }

  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    reject_unknown(s, {"n_ids", "n_contents", "clips_per_cell", "test_ids", "noise_std"},
                   "synthetic");
    maybe(s, "n_ids", cfg.synthetic.n_ids);
    maybe(s, "n_contents", cfg.synthetic.n_contents);
    maybe(s, "clips_per_cell", cfg.synthetic.clips_per_cell);
    maybe(s, "test_ids", cfg.synthetic.test_ids);
    maybe(s, "noise_std", cfg.synthetic.noise_std);
  }

  if (j.contains("idscore")) {
    const auto& i = j.at("idscore");
    reject_unknown(i, {"split_seed"}, "idscore");
    maybe(i, "split_seed", cfg.idscore_split_seed);
  }

  cfg.train.seed = cfg.seed;
  return cfg;
}

}  // namespace idmr
