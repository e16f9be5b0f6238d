// idmr: identity-preserving 2D-skeleton motion retargeting pipeline.
//
// Subcommands cover the full flow: synthetic data generation, raw keypoint
// preprocessing, training, retargeting, IDScore evaluation and stick-figure
// rendering.

#include "idmr/container_io.hpp"
#include "idmr/idscore.hpp"
#include "idmr/render.hpp"
#include "idmr/run_config.hpp"
#include "idmr/synthetic.hpp"
#include "idmr/training.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace idmr;

RunConfig load_config(const std::string& path, uint64_t seed_flag, bool seed_set) {
  RunConfig cfg = path.empty() ? RunConfig::defaults() : RunConfig::load(path);
  if (seed_set) {
    cfg.seed = seed_flag;
    cfg.train.seed = seed_flag;
  }
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  DatasetIndex index = synth_generate(cfg.synthetic.n_ids, cfg.synthetic.n_contents, cfg.frames,
                                      cfg.seed, cfg.synthetic.clips_per_cell,
                                      cfg.synthetic.noise_std);
  index.split_by_identity(cfg.synthetic.test_ids, cfg.seed);
  save_dataset(index, out_dir);
  std::cout << "wrote " << index.clip_count() << " clips ("
            << index.train_subset().clip_count() << " train / "
            << index.test_subset().clip_count() << " test) to " << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const std::string& in_path, const std::string& format,
                   const std::string& out_dir, const std::string& id_label,
                   const std::string& mc_label, int frames) {
  RawSequence seq = load_raw_sequence(in_path, parse_input_format(format));
  if (!id_label.empty()) seq.subject_id = id_label;
  if (!mc_label.empty()) seq.content_id = mc_label;
  const size_t raw_frames = seq.frames.size();
  seq = clean_frames(seq);
  seq = pad_missing(seq);
  const auto clips = trim_clips(seq, frames);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  DatasetIndex index;
  for (const auto& clip : clips) index.add(clip);
  save_dataset(index, out_dir);
  std::cout << "frames: " << raw_frames << " raw, " << seq.frames.size()
            << " valid; clips: " << clips.size() << " -> " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_manifest,
              const std::string& out_checkpoint) {
  DatasetIndex data = load_dataset(data_manifest);
  Model model = Model::init(cfg.model_config(), cfg.seed);
  Trainer trainer(std::move(model), cfg.train, data);
  trainer.set_manifest_digest(manifest_digest(data_manifest));
  const auto metrics = std::filesystem::path(out_checkpoint).replace_extension(".metrics.jsonl");
  const FitResult result = trainer.fit(metrics, out_checkpoint);
  if (!result.epochs.empty()) {
    const auto& first = result.epochs.front();
    const auto& last = result.epochs.back();
    std::cout << "epoch " << first.epoch << ": l_rec " << first.mean_l_rec << "; epoch "
              << last.epoch << ": l_rec " << last.mean_l_rec << "\n";
  }
  std::cout << "checkpoint: " << out_checkpoint << "\nmetrics: " << metrics.string() << "\n";
  return 0;
}

int cmd_retarget(const std::string& checkpoint, const std::string& source_path,
                 const std::string& target_path, const std::string& out_path) {
  const Model model = load_model_from_checkpoint(checkpoint);
  const MotionClip source = normalize(load_clip(source_path));
  const MotionClip target = normalize(load_clip(target_path));
  const MotionClip out = retarget(source, target, model);
  save_clip(out, out_path);
  std::cout << "retargeted (mc " << out.mc_label << ", id " << out.id_label << ") -> "
            << out_path << "\n";
  return 0;
}

int cmd_eval_idscore(const RunConfig& cfg, const std::string& checkpoint,
                     const std::string& data_manifest, const std::string& new_subject_path,
                     const std::string& embedder_spec, const std::string& out_path) {
  const Model model = load_model_from_checkpoint(checkpoint);
  DatasetIndex data = load_dataset(data_manifest);
  DatasetIndex test = data.test_subset();
  const MotionClip new_subject = normalize(load_clip(new_subject_path));

  std::unique_ptr<GaitEmbedder> embedder;
  if (embedder_spec == "baseline") {
    std::vector<MotionClip> train17;
    std::vector<std::string> labels;
    for (const auto& clip : data.train_subset().all_clips()) {
      train17.push_back(to_coco17(clip));
      labels.push_back(clip.id_label);
    }
    embedder = std::make_unique<BaselineEmbedder>(
        BaselineEmbedder::fit(train17, labels, cfg.seed));
  } else if (embedder_spec.rfind("external:", 0) == 0) {
    embedder = std::make_unique<ExternalEmbedder>(embedder_spec.substr(9));
  } else {
    throw ConfigError("--embedder must be 'baseline' or 'external:<path>'");
  }

  IdScoreOptions opts;
  opts.split_seed = cfg.idscore_split_seed;
  const IdScoreReport report = evaluate_idscore(model, test, new_subject, *embedder, opts);
  save_idscore_report(report, out_path);
  std::cout << "rank1 rec/cross: " << report.rec.rank1 << " / " << report.cross.rank1
            << "  idscore1: " << report.idscore1 << "\n"
            << "rank5 rec/cross: " << report.rec.rank5 << " / " << report.cross.rank5
            << "  idscore5: " << report.idscore5 << "\n"
            << "report: " << out_path << "\n";
  return 0;
}

int cmd_render(const std::string& source_path, const std::string& out_dir, int resolution) {
  const MotionClip clip = load_clip(source_path);
  RenderOptions opts;
  opts.resolution = resolution;
  const int n = render_clip(clip, out_dir, opts);
  std::cout << "wrote " << n << " frames to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identity-preserving 2D skeleton motion retargeting"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint, source, target, data_manifest;
  std::string format = "openpose_json_dir", embedder = "baseline", gan_form;
  std::string new_subject, id_label, mc_label;
  uint64_t seed = 0;
  bool seed_set = false;
  int frames = 64, resolution = 512;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic identity x content grid");
  add_common(gen);
  gen->add_option("--out", out_path, "output dataset directory")->required();

  auto* prep = app.add_subcommand("preprocess", "clean, pad and trim raw keypoints into clips");
  prep->add_option("--in", source, "input path (directory or container file)")->required();
  prep->add_option("--format", format, "openpose_json_dir | clip_container");
  prep->add_option("--out", out_path, "output dataset directory")->required();
  prep->add_option("--id", id_label, "subject label for the sequence");
  prep->add_option("--mc", mc_label, "content label for the sequence");
  prep->add_option("--frames", frames, "clip length T");

  auto* train = app.add_subcommand("train", "train the disentanglement/synthesis model");
  add_common(train);
  train->add_option("--data", data_manifest, "dataset manifest.json")->required();
  train->add_option("--out", out_path, "checkpoint output path")->required();
  train->add_option("--gan-form", gan_form, "lsgan | log");

  auto* ret = app.add_subcommand("retarget", "transfer MC from source onto target identity");
  ret->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ret->add_option("--source", source, "source clip (motion content)")->required();
  ret->add_option("--target", target, "target clip (identity)")->required();
  ret->add_option("--out", out_path, "output clip path")->required();

  auto* eval = app.add_subcommand("eval-idscore", "run the gallery/probe IDScore protocol");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data_manifest, "dataset manifest.json")->required();
  eval->add_option("--new-subject", new_subject, "clip of the unregistered subject")->required();
  eval->add_option("--embedder", embedder, "baseline | external:<path>");
  eval->add_option("--out", out_path, "report output path")->required();

  auto* rend = app.add_subcommand("render", "draw stick-figure frames for a clip");
  rend->add_option("--source", source, "clip to render")->required();
  rend->add_option("--out", out_path, "output frame directory")->required();
  rend->add_option("--resolution", resolution, "image size in pixels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(load_config(config_path, seed, seed_set), out_path);
    if (prep->parsed()) return cmd_preprocess(source, format, out_path, id_label, mc_label, frames);
    if (train->parsed()) {
      RunConfig cfg = load_config(config_path, seed, seed_set);
      if (!gan_form.empty()) cfg.train.gan_form = idmr::parse_gan_form(gan_form);
      return cmd_train(cfg, data_manifest, out_path);
    }
    if (ret->parsed()) return cmd_retarget(checkpoint, source, target, out_path);
    if (eval->parsed())
      return cmd_eval_idscore(load_config(config_path, seed, seed_set), checkpoint,
                              data_manifest, new_subject, embedder, out_path);
    if (rend->parsed()) return cmd_render(source, out_path, resolution);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
