#include "idmr/idscore.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>

namespace idmr {

IdScoreReport make_idscore_report(const RankReport& rec, const RankReport& cross) {
  IdScoreReport r;
  r.rec = rec;
  r.cross = cross;
  r.idscore1 = rec.rank1 - cross.rank1;
  r.idscore5 = rec.rank5 - cross.rank5;
  return r;
}

void save_idscore_report(const IdScoreReport& r, const std::filesystem::path& path) {
  nlohmann::json j{{"rank1_rec", r.rec.rank1},     {"rank1_cross", r.cross.rank1},
                   {"idscore1", r.idscore1},       {"rank5_rec", r.rec.rank5},
                   {"rank5_cross", r.cross.rank5}, {"idscore5", r.idscore5}};
  std::ofstream out(path);
  if (!out) throw FormatError("save_idscore_report: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::pair<std::vector<MotionClip>, std::vector<MotionClip>> split_gallery_probe(
    const DatasetIndex& test_set, uint64_t seed) {
  std::vector<MotionClip> gallery, probe;
  for (const auto& id : test_set.id_labels()) {
    std::vector<MotionClip> clips;
    for (const auto& [key, cell] : test_set.grid())
      if (key.first == id)
        for (const auto& c : cell) clips.push_back(c);
    if (clips.size() < 2)
      throw ConfigError("split_gallery_probe: identity " + id + " has fewer than 2 clips");
    Rng rng(mix_seed(seed, fnv1a64(id.data(), id.size())));
    rng.shuffle(clips);
    const size_t n_gallery = (clips.size() + 1) / 2;
    for (size_t i = 0; i < clips.size(); ++i)
      (i < n_gallery ? gallery : probe).push_back(clips[i]);
  }
  return {gallery, probe};
}

// ---- keypoint remapping ------------------------------------------------------

const std::array<int, 15> kBody25To15 = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};

// COCO-17 order: nose, eyes, ears, shoulders, elbows, wrists, hips, knees,
// ankles (left before right); -1 marks joints regressed from head/neck.
const std::array<int, 17> kCoco17From15 = {0,  -1, -1, -1, -1, 5, 2, 6, 3,
                                           7,  4,  12, 9,  13, 10, 14, 11};

MotionClip map_25_to_15(const MotionClip& clip) {
  if (clip.joints() != 25)
    throw ConfigError("map_25_to_15: expected a 25-joint clip, got arity " +
                      std::to_string(clip.joints()));
  const int T = clip.frames();
  MotionClip out;
  out.id_label = clip.id_label;
  out.mc_label = clip.mc_label;
  out.fps = clip.fps;
  out.data.resize(30, T);
  for (int i = 0; i < 15; ++i) {
    out.data.row(i) = clip.data.row(kBody25To15[static_cast<size_t>(i)]);
    out.data.row(15 + i) = clip.data.row(25 + kBody25To15[static_cast<size_t>(i)]);
  }
  return out;
}

namespace {

// extrapolation weights along the neck->nose axis for the four head joints
constexpr double kEyeEarUp[4] = {0.20, 0.16, 0.06, 0.02};  // leye, reye, lear, rear

void head_joint(const MotionClip& c15, int t, double up, float& x, float& y) {
  const float nx = c15.data(0, t), ny = c15.data(15, t);
  const float kx = c15.data(1, t), ky = c15.data(16, t);
  x = static_cast<float>(nx + up * (nx - kx));
  y = static_cast<float>(ny + up * (ny - ky));
}

}  // namespace

MotionClip map_15_to_17_baseline(const MotionClip& clip15) {
  if (clip15.joints() != 15)
    throw ConfigError("map_15_to_17_baseline: expected a 15-joint clip, got arity " +
                      std::to_string(clip15.joints()));
  const int T = clip15.frames();
  MotionClip out;
  out.id_label = clip15.id_label;
  out.mc_label = clip15.mc_label;
  out.fps = clip15.fps;
  out.data.resize(34, T);
  int head_slot = 0;
  for (int i = 0; i < 17; ++i) {
    const int src = kCoco17From15[static_cast<size_t>(i)];
    if (src >= 0) {
      out.data.row(i) = clip15.data.row(src);
      out.data.row(17 + i) = clip15.data.row(15 + src);
    } else {
      for (int t = 0; t < T; ++t) {
        float x, y;
        head_joint(clip15, t, kEyeEarUp[head_slot], x, y);
        out.data(i, t) = x;
        out.data(17 + i, t) = y;
      }
      ++head_slot;
    }
  }
  return out;
}

// ---- learned 15 -> 17 mapper ---------------------------------------------------

Body25To17Mapper Body25To17Mapper::zero(int hidden) {
  Body25To17Mapper m;
  m.w1_ = MatF::Zero(hidden, 30);
  m.w2_ = MatF::Zero(34, hidden);
  return m;
}

Body25To17Mapper Body25To17Mapper::fit(const std::vector<MotionClip>& clips15,
                                       const std::vector<MotionClip>& clips17, uint64_t seed,
                                       int hidden, int epochs, double lr) {
  if (clips15.size() != clips17.size() || clips15.empty())
    throw ConfigError("Body25To17Mapper::fit: paired clip lists required");
  Eigen::Index frames = 0;
  for (const auto& c : clips15) frames += c.frames();
  MatF X(30, frames), Y(34, frames);
  Eigen::Index at = 0;
  for (size_t i = 0; i < clips15.size(); ++i) {
    if (clips15[i].frames() != clips17[i].frames())
      throw ConfigError("Body25To17Mapper::fit: pair frame counts differ");
    X.middleCols(at, clips15[i].frames()) = clips15[i].data;
    Y.middleCols(at, clips17[i].frames()) = clips17[i].data;
    at += clips15[i].frames();
  }

  Rng rng(mix_seed(seed, 0x151701ULL));
  ParamSet<float> params;
  params.add("w1", init_normal<float>(hidden, 30, 30, rng));
  params.add("w2", init_normal<float>(34, hidden, hidden, rng));
  Adam<float>::Config ac;
  ac.lr = lr;
  ac.beta1 = 0.9;
  ac.weight_decay = 0.0;
  Adam<float> opt(ac);
  opt.attach(params);

  for (int e = 0; e < epochs; ++e) {
    TapeF tape;
    BoundParams<float> bp(tape, params, true);
    auto h = tape.leaky_relu(tape.matmul(bp["w1"], tape.constant(X)), 0.2f);
    auto pred = tape.matmul(bp["w2"], h);
    auto diff = tape.sub(pred, tape.constant(Y));
    auto loss = tape.mean_all(tape.mul(diff, diff));
    tape.backward(loss);
    std::vector<MatF> grads;
    for (size_t i = 0; i < params.count(); ++i) grads.push_back(bp.grad(static_cast<int>(i)));
    opt.step(params, grads);
  }

  Body25To17Mapper m;
  m.w1_ = params.value("w1");
  m.w2_ = params.value("w2");
  return m;
}

MotionClip Body25To17Mapper::apply(const MotionClip& clip15) const {
  if (w1_.size() == 0) throw ConfigError("Body25To17Mapper: untrained mapper");
  if (clip15.joints() != 15)
    throw ConfigError("Body25To17Mapper::apply: expected a 15-joint clip");
  MotionClip out;
  out.id_label = clip15.id_label;
  out.mc_label = clip15.mc_label;
  out.fps = clip15.fps;
  MatF h = (w1_ * clip15.data).unaryExpr([](float v) { return v > 0 ? v : 0.2f * v; });
  out.data = w2_ * h;
  return out;
}

// ---- ranking -------------------------------------------------------------------

namespace {

Eigen::VectorXf l2_normalized(Eigen::VectorXf v) {
  const float n = v.norm();
  if (n > 0) v /= n;
  return v;
}

}  // namespace

RankReport rank_metrics(const GaitEmbedder& embedder, const std::vector<MotionClip>& gallery,
                        const std::vector<MotionClip>& probe) {
  if (gallery.empty()) throw ConfigError("rank_metrics: empty gallery");
  if (probe.empty()) throw ConfigError("rank_metrics: empty probe set");

  std::vector<Eigen::VectorXf> gemb;
  gemb.reserve(gallery.size());
  for (const auto& g : gallery) gemb.push_back(l2_normalized(embedder.embed(g)));

  int hit1 = 0, hit5 = 0;
  const size_t k5 = std::min<size_t>(5, gallery.size());
  for (const auto& p : probe) {
    const Eigen::VectorXf pe = l2_normalized(embedder.embed(p));
    std::vector<std::pair<float, size_t>> order(gallery.size());
    for (size_t i = 0; i < gallery.size(); ++i) order[i] = {(gemb[i] - pe).norm(), i};
    std::sort(order.begin(), order.end());  // ties break by ascending gallery index
    if (gallery[order[0].second].id_label == p.id_label) ++hit1;
    for (size_t i = 0; i < k5; ++i)
      if (gallery[order[i].second].id_label == p.id_label) {
        ++hit5;
        break;
      }
  }
  RankReport r;
  r.rank1 = static_cast<double>(hit1) / static_cast<double>(probe.size());
  r.rank5 = static_cast<double>(hit5) / static_cast<double>(probe.size());
  return r;
}

// ---- baseline embedder ----------------------------------------------------------

namespace {

constexpr int kCocoChannels = 34;

TapeF::Var embed_forward(TapeF& tape, const BoundParams<float>& bp,
                         const DiscriminatorConfig& cfg, TapeF::Var x) {
  TapeF::Var h = x;
  const int pad = (cfg.kernel - 1) / 2;
  for (size_t l = 0; l < cfg.channels.size(); ++l) {
    const std::string p = "emb.l" + std::to_string(l);
    h = tape.conv1d(h, bp[p + ".w"], bp[p + ".b"], cfg.kernel, 2, pad);
    h = tape.leaky_relu(h, 0.2f);
  }
  h = tape.mean_cols(h);
  return tape.matmul(bp["emb.map.w"], h);
}

}  // namespace

BaselineEmbedder BaselineEmbedder::fit(const std::vector<MotionClip>& train_coco17,
                                       const std::vector<std::string>& id_labels, uint64_t seed,
                                       FitOptions opts) {
  if (train_coco17.size() != id_labels.size() || train_coco17.empty())
    throw ConfigError("BaselineEmbedder::fit: labeled training clips required");

  std::map<std::string, int> classes;
  for (const auto& id : id_labels)
    if (!classes.count(id)) classes[id] = static_cast<int>(classes.size());
  if (classes.size() < 2)
    throw ConfigError("BaselineEmbedder::fit: need at least 2 identities, got " +
                      std::to_string(classes.size()));
  const int n_classes = static_cast<int>(classes.size());

  BaselineEmbedder emb;
  emb.opts_ = opts;
  emb.enc_cfg_.channels = {32, 48, 64};
  emb.enc_cfg_.kernel = 3;

  Rng rng(mix_seed(seed, 0xba5e));
  int cin = kCocoChannels;
  for (size_t l = 0; l < emb.enc_cfg_.channels.size(); ++l) {
    const int cout = emb.enc_cfg_.channels[l];
    emb.params_.add("emb.l" + std::to_string(l) + ".w",
                    init_normal<float>(cout, cin * 3, cin * 3, rng));
    emb.params_.add("emb.l" + std::to_string(l) + ".b", zeros<float>(cout, 1));
    cin = cout;
  }
  emb.params_.add("emb.map.w", init_normal<float>(opts.embed_dim, cin, cin, rng));
  emb.params_.add("emb.cls.w", init_normal<float>(n_classes, opts.embed_dim, opts.embed_dim, rng));
  emb.params_.add("emb.cls.b", zeros<float>(n_classes, 1));

  Adam<float>::Config ac;
  ac.lr = opts.lr;
  ac.beta1 = 0.9;
  ac.weight_decay = 1e-4;
  Adam<float> opt(ac);
  opt.attach(emb.params_);

  std::vector<size_t> order(train_coco17.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int e = 0; e < opts.epochs; ++e) {
    Rng erng(mix_seed(seed, 0xba5e0000ULL + static_cast<uint64_t>(e)));
    erng.shuffle(order);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(opts.batch_size)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(opts.batch_size));
      if (end - at < 2) continue;
      TapeF tape;
      BoundParams<float> bp(tape, emb.params_, true);
      std::vector<TapeF::Var> embs;
      std::vector<int> labels;
      TapeF::Var ce_sum;
      bool first = true;
      for (size_t i = at; i < end; ++i) {
        const MotionClip& clip = train_coco17[order[i]];
        auto ev = embed_forward(tape, bp, emb.enc_cfg_, tape.constant(clip.data));
        embs.push_back(ev);
        const int y = classes.at(id_labels[order[i]]);
        labels.push_back(y);
        auto logits = tape.add_colvec(tape.matmul(bp["emb.cls.w"], ev), bp["emb.cls.b"]);
        auto ce = tape.sub(tape.logsumexp_col(logits), tape.slice_rows(logits, y, 1));
        ce_sum = first ? ce : tape.add(ce_sum, ce);
        first = false;
      }
      auto loss = tape.scale(ce_sum, 1.0f / static_cast<float>(end - at));
      bool has_triplet = false;
      {
        // a batch can land with a single class; skip the metric term then
        std::set<int> uniq(labels.begin(), labels.end());
        has_triplet = uniq.size() >= 2;
      }
      if (has_triplet) {
        auto tri = tape.batch_all_triplet(tape.hstack(embs), labels,
                                          static_cast<float>(opts.margin),
                                          1.0f / static_cast<float>(opts.embed_dim));
        loss = tape.add(loss, tri);
      }
      tape.backward(loss);
      std::vector<MatF> grads;
      for (size_t i = 0; i < emb.params_.count(); ++i)
        grads.push_back(bp.grad(static_cast<int>(i)));
      opt.step(emb.params_, grads);
    }
  }
  return emb;
}

Eigen::VectorXf BaselineEmbedder::raw_embed(const MotionClip& clip) const {
  if (clip.data.rows() != kCocoChannels)
    throw ConfigError("BaselineEmbedder: expected a COCO-17 clip (34 rows), got " +
                      std::to_string(clip.data.rows()));
  TapeF tape;
  BoundParams<float> bp(tape, params_, false);
  return tape.val(embed_forward(tape, bp, enc_cfg_, tape.constant(clip.data))).col(0);
}

Eigen::VectorXf BaselineEmbedder::embed(const MotionClip& clip) const {
  return l2_normalized(raw_embed(clip));
}

// ---- external embedder -----------------------------------------------------------

ExternalEmbedder::ExternalEmbedder(std::filesystem::path executable) : exe_(std::move(executable)) {
  if (!std::filesystem::exists(exe_))
    throw ConfigError("ExternalEmbedder: executable not found: " + exe_.string());
}

Eigen::VectorXf ExternalEmbedder::embed(const MotionClip& clip) const {
  static std::atomic<uint64_t> counter{0};
  const auto tag = std::to_string(counter.fetch_add(1));
  const auto tmp = std::filesystem::temp_directory_path();
  const auto in_path = tmp / ("idmr_emb_in_" + tag + ".json");
  const auto out_path = tmp / ("idmr_emb_out_" + tag + ".json");

  nlohmann::json j;
  j["rows"] = clip.data.rows();
  j["cols"] = clip.data.cols();
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(clip.data.size()));
  for (int r = 0; r < clip.data.rows(); ++r)
    for (int c = 0; c < clip.data.cols(); ++c) flat.push_back(clip.data(r, c));
  j["clips"] = nlohmann::json::array({flat});
  {
    std::ofstream out(in_path);
    out << j.dump();
  }

  const std::string cmd = exe_.string() + " " + in_path.string() + " " + out_path.string();
  const int rc = std::system(cmd.c_str());
  if (rc != 0)
    throw NumericError("ExternalEmbedder: command failed (" + std::to_string(rc) + "): " + cmd);

  std::ifstream in(out_path);
  if (!in) throw FormatError("ExternalEmbedder: no output file " + out_path.string());
  nlohmann::json out_json = nlohmann::json::parse(in);
  const auto& e = out_json.at("embeddings").at(0);
  Eigen::VectorXf v(static_cast<Eigen::Index>(e.size()));
  for (size_t i = 0; i < e.size(); ++i) v[static_cast<Eigen::Index>(i)] = e[i].get<float>();
  std::filesystem::remove(in_path);
  std::filesystem::remove(out_path);

  if (dim_ < 0)
    dim_ = static_cast<int>(v.size());
  else if (dim_ != static_cast<int>(v.size()))
    throw NumericError("ExternalEmbedder: embedding dimension changed between calls");
  return v;
}

int ExternalEmbedder::dim() const {
  if (dim_ < 0) throw ConfigError("ExternalEmbedder: dimension unknown before the first call");
  return dim_;
}

// ---- protocol --------------------------------------------------------------------

MotionClip to_coco17(const MotionClip& body25_clip, const Body25To17Mapper* mapper) {
  const MotionClip c15 = map_25_to_15(body25_clip);
  return mapper && mapper->trained() ? mapper->apply(c15) : map_15_to_17_baseline(c15);
}

IdScoreReport evaluate_idscore(const Model& model, const DatasetIndex& test_set,
                               const MotionClip& new_subject_clip, const GaitEmbedder& embedder,
                               const IdScoreOptions& opts) {
  auto [gallery, probe] = split_gallery_probe(test_set, opts.split_seed);

  for (const auto& g : gallery)
    if (g.id_label == new_subject_clip.id_label)
      throw ConfigError("evaluate_idscore: protocol violation, new subject " +
                        new_subject_clip.id_label + " is registered in the gallery");

  // every clip is re-normalized before embedding so raw and synthesized
  // motions share one coordinate frame
  std::vector<MotionClip> gallery17;
  gallery17.reserve(gallery.size());
  for (const auto& g : gallery) gallery17.push_back(to_coco17(normalize(g), opts.mapper));

  std::vector<MotionClip> rec17, cross17;
  rec17.reserve(probe.size());
  cross17.reserve(probe.size());
  for (const auto& p : probe) {
    MotionClip rec = normalize(retarget(p, p, model));
    rec.id_label = p.id_label;
    rec17.push_back(to_coco17(rec, opts.mapper));

    MotionClip crossed = normalize(retarget(p, new_subject_clip, model));
    crossed.id_label = p.id_label;  // scored against the original identity
    cross17.push_back(to_coco17(crossed, opts.mapper));
  }

  const RankReport rec = rank_metrics(embedder, gallery17, rec17);
  const RankReport cross = rank_metrics(embedder, gallery17, cross17);
  return make_idscore_report(rec, cross);
}

}  // namespace idmr
