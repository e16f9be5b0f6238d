#include "idmr/dataset.hpp"

#include "idmr/container_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace idmr {

int missing_count(const MatF& frame) {
  int n = 0;
  for (int j = 0; j < frame.rows(); ++j)
    if (joint_missing(frame, j)) ++n;
  return n;
}

bool triplet_valid(const TripletSample& t) {
  return t.m1.mc_label == t.m2.mc_label && t.m1.id_label != t.m2.id_label &&
         t.m2.id_label == t.m3.id_label && t.m2.mc_label != t.m3.mc_label;
}

// ---- DatasetIndex ------------------------------------------------------------

void DatasetIndex::add(MotionClip clip) {
  Key key{clip.id_label, clip.mc_label};
  ids_.insert(clip.id_label);
  grid_[key].push_back(std::move(clip));
}

std::vector<std::string> DatasetIndex::id_labels() const {
  return {ids_.begin(), ids_.end()};
}

std::vector<std::string> DatasetIndex::mc_labels() const {
  std::set<std::string> mcs;
  for (const auto& [key, clips] : grid_) mcs.insert(key.second);
  return {mcs.begin(), mcs.end()};
}

const std::vector<MotionClip>& DatasetIndex::cell(const std::string& id,
                                                  const std::string& mc) const {
  auto it = grid_.find({id, mc});
  if (it == grid_.end())
    throw ConfigError("DatasetIndex: no clips for (" + id + ", " + mc + ")");
  return it->second;
}

bool DatasetIndex::has_cell(const std::string& id, const std::string& mc) const {
  auto it = grid_.find({id, mc});
  return it != grid_.end() && !it->second.empty();
}

size_t DatasetIndex::clip_count() const {
  size_t n = 0;
  for (const auto& [key, clips] : grid_) n += clips.size();
  return n;
}

void DatasetIndex::assign_split(const std::string& id, bool test) {
  if (test)
    test_ids_.insert(id);
  else
    test_ids_.erase(id);
}

std::set<std::string> DatasetIndex::train_ids() const {
  std::set<std::string> out;
  for (const auto& id : ids_)
    if (!test_ids_.count(id)) out.insert(id);
  return out;
}

void DatasetIndex::split_by_identity(int n_test_ids, uint64_t seed) {
  std::vector<std::string> ids(ids_.begin(), ids_.end());
  if (n_test_ids < 0 || n_test_ids > static_cast<int>(ids.size()))
    throw ConfigError("split_by_identity: test id count out of range");
  Rng rng(mix_seed(seed, 0x5b17));
  rng.shuffle(ids);
  test_ids_.clear();
  for (int i = 0; i < n_test_ids; ++i)
    test_ids_.insert(ids[ids.size() - 1 - static_cast<size_t>(i)]);
}

DatasetIndex DatasetIndex::train_subset() const {
  DatasetIndex out;
  for (const auto& [key, clips] : grid_)
    if (!test_ids_.count(key.first))
      for (const auto& c : clips) out.add(c);
  return out;
}

DatasetIndex DatasetIndex::test_subset() const {
  DatasetIndex out;
  for (const auto& [key, clips] : grid_)
    if (test_ids_.count(key.first))
      for (const auto& c : clips) out.add(c);
  return out;
}

std::vector<MotionClip> DatasetIndex::all_clips() const {
  std::vector<MotionClip> out;
  for (const auto& [key, clips] : grid_)
    for (const auto& c : clips) out.push_back(c);
  return out;
}

// ---- preprocessing -----------------------------------------------------------

RawSequence clean_frames(const RawSequence& seq) {
  RawSequence out;
  out.fps = seq.fps;
  out.subject_id = seq.subject_id;
  out.content_id = seq.content_id;
  if (seq.frames.empty()) return out;
  const int threshold = seq.joints() / 3;  // floor(J/3)
  for (const auto& f : seq.frames)
    if (missing_count(f) <= threshold) out.frames.push_back(f);
  return out;
}

RawSequence pad_missing(const RawSequence& seq) {
  constexpr int kWindow = 5;
  RawSequence out = seq;
  const int n = static_cast<int>(seq.frames.size());
  const int joints = seq.joints();
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < joints; ++j) {
      if (!joint_missing(seq.frames[static_cast<size_t>(t)], j)) continue;
      double wx = 0, wy = 0, wc = 0, wsum = 0;
      int used = 0;
      const int lo = std::max(0, t - kWindow), hi = std::min(n - 1, t + kWindow);
      for (int u = lo; u <= hi; ++u) {
        if (u == t) continue;
        const MatF& f = seq.frames[static_cast<size_t>(u)];
        if (joint_missing(f, j)) continue;
        const double w = f(j, 2);
        wx += w * f(j, 0);
        wy += w * f(j, 1);
        wc += w * f(j, 2);
        wsum += w;
        ++used;
      }
      MatF& dst = out.frames[static_cast<size_t>(t)];
      if (used > 0 && wsum > 0) {
        dst(j, 0) = static_cast<float>(wx / wsum);
        dst(j, 1) = static_cast<float>(wy / wsum);
        dst(j, 2) = static_cast<float>(wc / wsum);
      } else {
        // window empty: nearest present occurrence anywhere in the sequence
        int best = -1;
        for (int d = 1; d < n; ++d) {
          if (t - d >= 0 && !joint_missing(seq.frames[static_cast<size_t>(t - d)], j)) {
            best = t - d;
            break;
          }
          if (t + d < n && !joint_missing(seq.frames[static_cast<size_t>(t + d)], j)) {
            best = t + d;
            break;
          }
        }
        if (best < 0)
          throw FormatError("pad_missing: joint " + std::to_string(j) +
                            " unreconstructable at frame " + std::to_string(t) +
                            " (missing in the whole sequence)");
        const MatF& f = seq.frames[static_cast<size_t>(best)];
        dst(j, 0) = f(j, 0);
        dst(j, 1) = f(j, 1);
        dst(j, 2) = f(j, 2);
      }
    }
  }
  return out;
}

MotionClip normalize(const MotionClip& clip) {
  const int joints = clip.joints();
  const int frames = clip.frames();
  if (joints <= body25::kMidHip)
    throw ConfigError("normalize: clip has no mid-hip joint row");
  if (!clip.data.allFinite()) throw NumericError("normalize: non-finite coordinates");

  const auto x_row = [&](int j) { return clip.data.row(j); };
  const auto y_row = [&](int j) { return clip.data.row(joints + j); };

  // statistics in double so translation/scale invariance holds tightly
  double cx = 0.0, cy = 0.0, torso = 0.0;
  for (int t = 0; t < frames; ++t) {
    cx += x_row(body25::kMidHip)(t);
    cy += y_row(body25::kMidHip)(t);
    const double dx = x_row(body25::kNeck)(t) - x_row(body25::kMidHip)(t);
    const double dy = y_row(body25::kNeck)(t) - y_row(body25::kMidHip)(t);
    torso += std::sqrt(dx * dx + dy * dy);
  }
  cx /= frames;
  cy /= frames;
  torso /= frames;
  if (!(torso > 1e-9))
    throw NumericError("normalize: degenerate pose (zero mean torso length)");

  MotionClip out = clip;
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < joints; ++j) {
      out.data(j, t) = static_cast<float>((x_row(j)(t) - cx) / torso);
      out.data(joints + j, t) = static_cast<float>((y_row(j)(t) - cy) / torso);
    }
  return out;
}

std::vector<MotionClip> trim_clips(const RawSequence& seq, int T) {
  if (T <= 0) throw ConfigError("trim_clips: T must be positive");
  std::vector<MotionClip> out;
  const int n = static_cast<int>(seq.frames.size());
  const int joints = seq.joints();
  for (int start = 0; start + T <= n; start += T) {
    MotionClip clip;
    clip.data.resize(2 * joints, T);
    clip.id_label = seq.subject_id;
    clip.mc_label = seq.content_id;
    clip.fps = seq.fps;
    for (int t = 0; t < T; ++t) {
      const MatF& f = seq.frames[static_cast<size_t>(start + t)];
      if (missing_count(f) > 0)
        throw FormatError("trim_clips: missing joints at frame " + std::to_string(start + t) +
                          "; run pad_missing first");
      for (int j = 0; j < joints; ++j) {
        clip.data(j, t) = f(j, 0);
        clip.data(joints + j, t) = f(j, 1);
      }
    }
    out.push_back(normalize(clip));
  }
  return out;
}

// ---- triplet sampling ----------------------------------------------------------

namespace {

struct TrainGridView {
  // content -> ids populated at that content (train split only)
  std::map<std::string, std::vector<std::string>> ids_at;
  // id -> populated contents
  std::map<std::string, std::vector<std::string>> contents_of;
};

TrainGridView train_view(const DatasetIndex& index) {
  TrainGridView v;
  const auto train = index.train_ids();
  for (const auto& [key, clips] : index.grid()) {
    if (clips.empty() || !train.count(key.first)) continue;
    v.ids_at[key.second].push_back(key.first);
    v.contents_of[key.first].push_back(key.second);
  }
  return v;
}

}  // namespace

TripletSample sample_triplet(const DatasetIndex& index, Rng& rng) {
  const TrainGridView v = train_view(index);

  // contents where a valid (a, b) pair can exist
  std::vector<std::string> candidates;
  for (const auto& [mc, ids] : v.ids_at) {
    if (ids.size() < 2) continue;
    bool has_b = false;
    for (const auto& id : ids)
      if (v.contents_of.at(id).size() >= 2) has_b = true;
    if (has_b) candidates.push_back(mc);
  }
  if (candidates.empty())
    throw ConfigError("sample_triplet: insufficient diversity (need two ids sharing a "
                      "content and one of them with a second content)");

  const auto pick = [&rng](const std::vector<std::string>& xs) {
    return xs[static_cast<size_t>(rng.uniform_int(static_cast<int>(xs.size())))];
  };
  const auto pick_clip = [&rng, &index](const std::string& id, const std::string& mc) {
    const auto& cell = index.cell(id, mc);
    return cell[static_cast<size_t>(rng.uniform_int(static_cast<int>(cell.size())))];
  };

  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::string mc = pick(candidates);
    const auto& ids = v.ids_at.at(mc);
    // branch-2/3 identity must offer a second content
    std::vector<std::string> b_opts;
    for (const auto& id : ids)
      if (v.contents_of.at(id).size() >= 2) b_opts.push_back(id);
    if (b_opts.empty()) continue;
    const std::string b = pick(b_opts);
    std::vector<std::string> a_opts;
    for (const auto& id : ids)
      if (id != b) a_opts.push_back(id);
    if (a_opts.empty()) continue;
    const std::string a = pick(a_opts);
    std::vector<std::string> c2_opts;
    for (const auto& c : v.contents_of.at(b))
      if (c != mc) c2_opts.push_back(c);
    const std::string mc2 = pick(c2_opts);

    TripletSample t{pick_clip(a, mc), pick_clip(b, mc), pick_clip(b, mc2)};
    if (triplet_valid(t)) return t;
  }
  throw ConfigError("sample_triplet: insufficient diversity after bounded retries");
}

// ---- manifest ------------------------------------------------------------------

void save_dataset(const DatasetIndex& index, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "clips");
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["clips"] = nlohmann::json::array();
  int i = 0;
  for (const auto& [key, clips] : index.grid()) {
    for (const auto& clip : clips) {
      char name[64];
      std::snprintf(name, sizeof(name), "clips/clip_%05d.txt", i++);
      save_clip(clip, dir / name);
      manifest["clips"].push_back({{"id", clip.id_label},
                                   {"mc", clip.mc_label},
                                   {"path", name},
                                   {"split", index.is_test(clip.id_label) ? "test" : "train"}});
    }
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("save_dataset: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

DatasetIndex load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("load_dataset: cannot open " + manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  DatasetIndex index;
  const auto base = manifest_path.parent_path();
  for (const auto& entry : manifest.at("clips")) {
    MotionClip clip = load_clip(base / entry.at("path").get<std::string>());
    clip.id_label = entry.at("id").get<std::string>();
    clip.mc_label = entry.at("mc").get<std::string>();
    const bool test = entry.at("split").get<std::string>() == "test";
    index.add(std::move(clip));
    index.assign_split(entry.at("id").get<std::string>(), test);
  }
  return index;
}

uint64_t manifest_digest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw FormatError("manifest_digest: cannot open " + manifest_path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace idmr
