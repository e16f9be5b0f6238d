#include "idmr/container_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace idmr {

namespace {

// %.9g round-trips float32 exactly.
void print_float(std::string& out, float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  out += buf;
}

std::vector<float> parse_floats(const std::string& line) {
  std::vector<float> out;
  const char* p = line.c_str();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p >= end) break;
    char* q = nullptr;
    float v = std::strtof(p, &q);
    if (q == p) throw FormatError("container: malformed number in line: " + line.substr(0, 40));
    out.push_back(v);
    p = q;
  }
  return out;
}

std::string expect_kv(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("container: unexpected end of header");
  if (line.rfind(key + " ", 0) != 0)
    throw FormatError("container: expected '" + key + "', got '" + line + "'");
  return line.substr(key.size() + 1);
}

}  // namespace

InputFormat parse_input_format(const std::string& s) {
  if (s == "openpose_json_dir") return InputFormat::openpose_json_dir;
  if (s == "clip_container") return InputFormat::clip_container;
  throw ConfigError("unknown input format: " + s);
}

void save_clip(const MotionClip& clip, const std::filesystem::path& path) {
  std::string out;
  out.reserve(static_cast<size_t>(clip.data.size()) * 12);
  out += "MRCLIP 1\n";
  out += "J " + std::to_string(clip.joints()) + "\n";
  out += "T " + std::to_string(clip.frames()) + "\n";
  char fps[32];
  std::snprintf(fps, sizeof(fps), "%.9g", clip.fps);
  out += std::string("fps ") + fps + "\n";
  out += "id " + clip.id_label + "\n";
  out += "mc " + clip.mc_label + "\n";
  out += "data\n";
  for (int r = 0; r < clip.data.rows(); ++r) {
    for (int c = 0; c < clip.data.cols(); ++c) {
      if (c) out += ' ';
      print_float(out, clip.data(r, c));
    }
    out += '\n';
  }
  std::ofstream f(path);
  if (!f) throw FormatError("save_clip: cannot write " + path.string());
  f << out;
}

MotionClip load_clip(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_clip: cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "MRCLIP 1") throw FormatError("load_clip: bad magic in " + path.string());
  const int joints = std::stoi(expect_kv(in, "J"));
  const int frames = std::stoi(expect_kv(in, "T"));
  MotionClip clip;
  clip.fps = std::stod(expect_kv(in, "fps"));
  clip.id_label = expect_kv(in, "id");
  clip.mc_label = expect_kv(in, "mc");
  std::string line;
  std::getline(in, line);
  if (line != "data") throw FormatError("load_clip: expected 'data' in " + path.string());
  clip.data.resize(2 * joints, frames);
  for (int r = 0; r < 2 * joints; ++r) {
    if (!std::getline(in, line))
      throw FormatError("load_clip: truncated data at row " + std::to_string(r));
    const auto vals = parse_floats(line);
    if (static_cast<int>(vals.size()) != frames)
      throw FormatError("load_clip: row " + std::to_string(r) + " has " +
                        std::to_string(vals.size()) + " values, expected " +
                        std::to_string(frames));
    for (int c = 0; c < frames; ++c) clip.data(r, c) = vals[static_cast<size_t>(c)];
  }
  return clip;
}

void save_raw(const RawSequence& seq, const std::filesystem::path& path) {
  std::string out;
  out += "MRRAW 1\n";
  out += "J " + std::to_string(seq.joints()) + "\n";
  out += "frames " + std::to_string(seq.frames.size()) + "\n";
  char fps[32];
  std::snprintf(fps, sizeof(fps), "%.9g", seq.fps);
  out += std::string("fps ") + fps + "\n";
  out += "id " + seq.subject_id + "\n";
  out += "mc " + seq.content_id + "\n";
  out += "data\n";
  for (const auto& f : seq.frames) {
    for (int j = 0; j < f.rows(); ++j) {
      if (j) out += ' ';
      print_float(out, f(j, 0));
      out += ' ';
      print_float(out, f(j, 1));
      out += ' ';
      print_float(out, f(j, 2));
    }
    out += '\n';
  }
  std::ofstream fo(path);
  if (!fo) throw FormatError("save_raw: cannot write " + path.string());
  fo << out;
}

RawSequence load_raw_container(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_raw: cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "MRRAW 1") throw FormatError("load_raw: bad magic in " + path.string());
  const int joints = std::stoi(expect_kv(in, "J"));
  const int frames = std::stoi(expect_kv(in, "frames"));
  RawSequence seq;
  seq.fps = std::stod(expect_kv(in, "fps"));
  seq.subject_id = expect_kv(in, "id");
  seq.content_id = expect_kv(in, "mc");
  std::string line;
  std::getline(in, line);
  if (line != "data") throw FormatError("load_raw: expected 'data'");
  for (int t = 0; t < frames; ++t) {
    if (!std::getline(in, line))
      throw FormatError("load_raw: truncated at frame " + std::to_string(t));
    const auto vals = parse_floats(line);
    if (static_cast<int>(vals.size()) != 3 * joints)
      throw FormatError("load_raw: frame " + std::to_string(t) + " has " +
                        std::to_string(vals.size()) + " values, expected " +
                        std::to_string(3 * joints));
    MatF f(joints, 3);
    for (int j = 0; j < joints; ++j) {
      f(j, 0) = vals[static_cast<size_t>(3 * j)];
      f(j, 1) = vals[static_cast<size_t>(3 * j + 1)];
      f(j, 2) = vals[static_cast<size_t>(3 * j + 2)];
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

RawSequence load_openpose_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw FormatError("load_openpose_dir: not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  if (files.empty())
    throw FormatError("load_openpose_dir: empty input directory " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  RawSequence seq;
  constexpr int kJ = body25::kJoints;
  for (const auto& file : files) {
    std::ifstream in(file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      throw FormatError("load_openpose_dir: malformed JSON in frame " +
                        file.filename().string() + ": " + e.what());
    }
    MatF frame = MatF::Zero(kJ, 3);
    if (!j.contains("people"))
      throw FormatError("load_openpose_dir: no 'people' array in frame " +
                        file.filename().string());
    const auto& people = j["people"];
    if (people.size() > 1)
      throw FormatError("load_openpose_dir: multi-person frame " + file.filename().string() +
                        " unsupported");
    if (people.size() == 1) {
      const auto& kp = people[0].at("pose_keypoints_2d");
      if (kp.size() != 3 * kJ)
        throw FormatError("load_openpose_dir: frame " + file.filename().string() + " carries " +
                          std::to_string(kp.size()) + " numbers, expected " +
                          std::to_string(3 * kJ));
      for (int q = 0; q < kJ; ++q) {
        frame(q, 0) = kp[static_cast<size_t>(3 * q)].get<float>();
        frame(q, 1) = kp[static_cast<size_t>(3 * q + 1)].get<float>();
        frame(q, 2) = kp[static_cast<size_t>(3 * q + 2)].get<float>();
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

RawSequence load_raw_sequence(const std::filesystem::path& path, InputFormat format) {
  switch (format) {
    case InputFormat::openpose_json_dir:
      return load_openpose_dir(path);
    case InputFormat::clip_container:
      return load_raw_container(path);
  }
  throw ConfigError("load_raw_sequence: unknown format");
}

}  // namespace idmr
