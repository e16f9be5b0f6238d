#pragma once

#include "idmr/dataset.hpp"

#include <filesystem>

namespace idmr {

enum class InputFormat { openpose_json_dir, clip_container };

InputFormat parse_input_format(const std::string& s);

// Text clip container ("MRCLIP 1"): header lines (J, T, fps, labels) then
// 2J rows of T decimal numbers. Values round-trip float32 exactly.
void save_clip(const MotionClip& clip, const std::filesystem::path& path);
MotionClip load_clip(const std::filesystem::path& path);

// Text raw-sequence container ("MRRAW 1"): one 75-number line per frame.
void save_raw(const RawSequence& seq, const std::filesystem::path& path);
RawSequence load_raw_container(const std::filesystem::path& path);

// Directory of per-frame OpenPose JSON files, lexicographic frame order.
// Every record must carry 25 x [x, y, c]; a frame with no people becomes a
// frame of missing joints.
RawSequence load_openpose_dir(const std::filesystem::path& dir);

RawSequence load_raw_sequence(const std::filesystem::path& path, InputFormat format);

}  // namespace idmr
