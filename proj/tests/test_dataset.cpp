#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idmr/container_io.hpp"
#include "idmr/synthetic.hpp"
#include "support.hpp"

#include <fstream>

using namespace idmr;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("idmr_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// frame with `missing` joints zeroed out, the rest on a plausible body
MatF make_frame(int missing, float offset = 0.0f) {
  MatF f(25, 3);
  for (int j = 0; j < 25; ++j) {
    f(j, 0) = 0.1f * j + 1.0f + offset;
    f(j, 1) = 0.05f * j + 2.0f + offset;
    f(j, 2) = 0.9f;
  }
  for (int j = 0; j < missing; ++j) {
    // knock out tail joints, keeping neck/mid-hip intact
    f(24 - j, 0) = 0;
    f(24 - j, 1) = 0;
    f(24 - j, 2) = 0;
  }
  return f;
}

RawSequence make_sequence(int frames, double fps = 30.0) {
  RawSequence seq;
  seq.fps = fps;
  seq.subject_id = "id00";
  seq.content_id = "mc00";
  for (int t = 0; t < frames; ++t) seq.frames.push_back(make_frame(0, 0.01f * t));
  return seq;
}

}  // namespace

TEST_CASE("clean_frames boundary: 8 missing kept, 9 removed") {
  RawSequence seq;
  seq.frames.push_back(make_frame(9));
  seq.frames.push_back(make_frame(8));
  seq.frames.push_back(make_frame(0));
  const RawSequence out = clean_frames(seq);
  REQUIRE(out.frames.size() == 2);
  CHECK(missing_count(out.frames[0]) == 8);
  CHECK(missing_count(out.frames[1]) == 0);
}

TEST_CASE("clean_frames drops exactly the over-threshold frames") {
  Rng rng(5);
  RawSequence seq;
  int expect_kept = 0;
  for (int t = 0; t < 100; ++t) {
    const int missing = (t % 8 == 0) ? 9 + rng.uniform_int(5) : rng.uniform_int(9);
    seq.frames.push_back(make_frame(missing));
    if (missing <= 8) ++expect_kept;
  }
  REQUIRE(expect_kept == 87);  // 13 frames over threshold by construction
  const RawSequence out = clean_frames(seq);
  CHECK(static_cast<int>(out.frames.size()) == expect_kept);

  // idempotence
  const RawSequence again = clean_frames(out);
  REQUIRE(again.frames.size() == out.frames.size());
  for (size_t i = 0; i < out.frames.size(); ++i) CHECK(again.frames[i] == out.frames[i]);
}

TEST_CASE("pad_missing fills from the +-5 window") {
  SUBCASE("constant neighborhood") {
    RawSequence seq = make_sequence(11);
    for (auto& f : seq.frames) {
      f(20, 0) = 0.5f;
      f(20, 1) = 0.5f;
    }
    seq.frames[5](20, 0) = 0;
    seq.frames[5](20, 1) = 0;
    seq.frames[5](20, 2) = 0;
    const RawSequence out = pad_missing(seq);
    CHECK(out.frames[5](20, 0) == doctest::Approx(0.5));
    CHECK(out.frames[5](20, 1) == doctest::Approx(0.5));
    CHECK(missing_count(out.frames[5]) == 0);
  }

  SUBCASE("no missing joints -> bit-identical") {
    RawSequence seq = make_sequence(7);
    const RawSequence out = pad_missing(seq);
    for (size_t t = 0; t < seq.frames.size(); ++t) CHECK(out.frames[t] == seq.frames[t]);
  }

  SUBCASE("equal-confidence two-neighbor mean") {
    RawSequence seq = make_sequence(3);
    // joint 10 present only at t=0 and t=2; values average to (0.5, 0.5)
    for (int t = 0; t < 3; ++t) {
      seq.frames[static_cast<size_t>(t)](10, 0) = 0;
      seq.frames[static_cast<size_t>(t)](10, 1) = 0;
      seq.frames[static_cast<size_t>(t)](10, 2) = 0;
    }
    seq.frames[0](10, 0) = 1.0f;
    seq.frames[0](10, 1) = 0.0f;
    seq.frames[0](10, 2) = 0.7f;
    seq.frames[2](10, 0) = 0.0f;
    seq.frames[2](10, 1) = 1.0f;
    seq.frames[2](10, 2) = 0.7f;
    const RawSequence out = pad_missing(seq);
    CHECK(out.frames[1](10, 0) == doctest::Approx(0.5));
    CHECK(out.frames[1](10, 1) == doctest::Approx(0.5));
  }

  SUBCASE("confidence-weighted mean matches scalar oracle") {
    RawSequence seq = make_sequence(3);
    for (int t = 0; t < 3; ++t) {
      seq.frames[static_cast<size_t>(t)](12, 0) = 0;
      seq.frames[static_cast<size_t>(t)](12, 1) = 0;
      seq.frames[static_cast<size_t>(t)](12, 2) = 0;
    }
    seq.frames[0](12, 0) = 1.0f;
    seq.frames[0](12, 1) = 2.0f;
    seq.frames[0](12, 2) = 0.8f;
    seq.frames[2](12, 0) = 3.0f;
    seq.frames[2](12, 1) = 6.0f;
    seq.frames[2](12, 2) = 0.4f;
    const RawSequence out = pad_missing(seq);
    const double wx = (0.8 * 1.0 + 0.4 * 3.0) / 1.2;
    const double wy = (0.8 * 2.0 + 0.4 * 6.0) / 1.2;
    CHECK(out.frames[1](12, 0) == doctest::Approx(wx));
    CHECK(out.frames[1](12, 1) == doctest::Approx(wy));
  }

  SUBCASE("empty window falls back to nearest occurrence anywhere") {
    RawSequence seq = make_sequence(20);
    for (int t = 0; t < 20; ++t) {
      seq.frames[static_cast<size_t>(t)](15, 0) = 0;
      seq.frames[static_cast<size_t>(t)](15, 1) = 0;
      seq.frames[static_cast<size_t>(t)](15, 2) = 0;
    }
    seq.frames[19](15, 0) = 7.0f;
    seq.frames[19](15, 1) = 8.0f;
    seq.frames[19](15, 2) = 0.5f;
    const RawSequence out = pad_missing(seq);
    CHECK(out.frames[0](15, 0) == 7.0f);  // window empty at t=0; frame 19 is nearest
    CHECK(out.frames[0](15, 1) == 8.0f);
  }

  SUBCASE("joint missing everywhere -> unreconstructable error") {
    RawSequence seq = make_sequence(6);
    for (auto& f : seq.frames) {
      f(22, 0) = 0;
      f(22, 1) = 0;
      f(22, 2) = 0;
    }
    CHECK_THROWS_AS(pad_missing(seq), FormatError);
    try {
      pad_missing(seq);
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("22") != std::string::npos);  // names the joint
    }
  }

  SUBCASE("present joints are bit-identical after padding") {
    RawSequence seq = make_sequence(9);
    seq.frames[4](11, 0) = 0;
    seq.frames[4](11, 1) = 0;
    seq.frames[4](11, 2) = 0;
    const RawSequence out = pad_missing(seq);
    for (int t = 0; t < 9; ++t)
      for (int j = 0; j < 25; ++j) {
        if (t == 4 && j == 11) continue;
        CHECK(out.frames[static_cast<size_t>(t)].row(j) ==
              seq.frames[static_cast<size_t>(t)].row(j));
      }
  }
}

TEST_CASE("trim_clips window arithmetic") {
  CHECK(trim_clips(make_sequence(640), 64).size() == 10);
  CHECK(trim_clips(make_sequence(63), 64).empty());
  CHECK(trim_clips(make_sequence(127), 64).size() == 1);
  const auto clips = trim_clips(make_sequence(128), 64);
  for (const auto& c : clips) {
    CHECK(c.frames() == 64);
    CHECK(c.joints() == 25);
    CHECK(c.id_label == "id00");
  }
}

TEST_CASE("clip bookkeeping reproduces 91 x 81 = 7371") {
  // one full-size sequence: 81 * 64 frames trims to 81 clips
  const auto clips = trim_clips(make_sequence(81 * 64), 64);
  CHECK(clips.size() == 81);

  // same-shape index bookkeeping: 91 subjects x 81 clips, split 91/10 by id
  DatasetIndex index;
  for (int s = 0; s < 91 + 10; ++s)
    for (int c = 0; c < 81; ++c) {
      MotionClip clip;
      clip.data = MatF::Zero(2, 2);  // bookkeeping only
      clip.id_label = "subj" + std::to_string(s);
      clip.mc_label = "clip" + std::to_string(c);
      index.add(clip);
    }
  index.split_by_identity(10, 123);
  CHECK(index.train_subset().clip_count() == 7371);
  CHECK(index.test_subset().clip_count() == 810);

  // split disjointness
  const auto train = index.train_ids();
  for (const auto& id : index.test_ids()) CHECK(train.count(id) == 0);
}

TEST_CASE("normalize invariances") {
  // grid-aligned coordinates so +3/-7 translations stay exactly representable
  Rng rng(17);
  MotionClip clip;
  clip.data.resize(50, 8);
  for (int j = 0; j < 50; ++j)
    for (int t = 0; t < 8; ++t)
      clip.data(j, t) = static_cast<float>(rng.uniform_int(4096) - 2048) / 1024.0f;
  // keep the torso non-degenerate
  for (int t = 0; t < 8; ++t) {
    clip.data(body25::kNeck, t) = 0.25f;
    clip.data(25 + body25::kNeck, t) = -1.0f;
    clip.data(body25::kMidHip, t) = 0.125f;
    clip.data(25 + body25::kMidHip, t) = 0.5f;
  }

  const MotionClip base = normalize(clip);

  SUBCASE("translation invariance") {
    MotionClip moved = clip;
    moved.data.topRows(25).array() += 3.0f;
    moved.data.bottomRows(25).array() -= 7.0f;
    const MotionClip out = normalize(moved);
    CHECK((out.data - base.data).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("scale invariance") {
    MotionClip scaled = clip;
    scaled.data *= 2.0f;
    const MotionClip out = normalize(scaled);
    CHECK((out.data - base.data).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("exact fixed point") {
    MotionClip fixed;
    fixed.data = MatF::Zero(50, 4);
    for (int t = 0; t < 4; ++t) {
      fixed.data(body25::kNeck, t) = 0.0f;
      fixed.data(25 + body25::kNeck, t) = -1.0f;  // torso length exactly 1
      for (int j = 0; j < 25; ++j)
        if (j != body25::kNeck && j != body25::kMidHip) {
          fixed.data(j, t) = 0.25f * ((j % 5) - 2);
          fixed.data(25 + j, t) = 0.125f * ((j % 7) - 3);
        }
    }
    const MotionClip out = normalize(fixed);
    CHECK((out.data - fixed.data).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("degenerate torso") {
    MotionClip degenerate = clip;
    for (int t = 0; t < 8; ++t) {
      degenerate.data(body25::kNeck, t) = degenerate.data(body25::kMidHip, t);
      degenerate.data(25 + body25::kNeck, t) = degenerate.data(25 + body25::kMidHip, t);
    }
    CHECK_THROWS_AS(normalize(degenerate), NumericError);
  }
}

TEST_CASE("sample_triplet") {
  SUBCASE("minimal 2x2 grid") {
    DatasetIndex index = synth_generate(2, 2, 16, 3, 1);
    Rng rng(1);
    const TripletSample t = sample_triplet(index, rng);
    CHECK(triplet_valid(t));
  }

  SUBCASE("single identity errors") {
    DatasetIndex index;
    for (int c = 0; c < 3; ++c) {
      MotionClip clip;
      clip.data = MatF::Zero(2, 2);
      clip.id_label = "only";
      clip.mc_label = "mc" + std::to_string(c);
      index.add(clip);
    }
    Rng rng(1);
    CHECK_THROWS_AS(sample_triplet(index, rng), ConfigError);
  }

  SUBCASE("10k draws never violate the constraints") {
    DatasetIndex index = synth_generate(6, 8, 16, 9, 2);
    Rng rng(77);
    for (int i = 0; i < 10000; ++i) {
      const TripletSample t = sample_triplet(index, rng);
      REQUIRE(t.m1.mc_label == t.m2.mc_label);
      REQUIRE(t.m1.id_label != t.m2.id_label);
      REQUIRE(t.m2.id_label == t.m3.id_label);
      REQUIRE(t.m2.mc_label != t.m3.mc_label);
    }
  }

  SUBCASE("deterministic under a fixed seed") {
    DatasetIndex index = synth_generate(4, 4, 16, 5, 2);
    Rng a(42), b(42);
    for (int i = 0; i < 20; ++i) {
      const TripletSample ta = sample_triplet(index, a);
      const TripletSample tb = sample_triplet(index, b);
      CHECK(ta.m1.data == tb.m1.data);
      CHECK(ta.m2.data == tb.m2.data);
      CHECK(ta.m3.data == tb.m3.data);
    }
  }
}

TEST_CASE("synthetic generator") {
  SUBCASE("determinism and cell counts") {
    const DatasetIndex a = synth_generate(6, 8, 64, 11, 2);
    const DatasetIndex b = synth_generate(6, 8, 64, 11, 2);
    CHECK(a.clip_count() == 96);
    const auto& cell_a = a.cell("id03", "mc05");
    const auto& cell_b = b.cell("id03", "mc05");
    REQUIRE(cell_a.size() == 2);
    CHECK(cell_a[0].data == cell_b[0].data);  // bitwise
  }

  SUBCASE("identity transform inverts to a shared phase-free base") {
    SynthGenerator gen(21, 3, 4);
    const int content = 2, T = 64;
    for (int id : {0, 1}) {
      const IdentityStyle& style = gen.style(id);
      const MatD styled = gen.styled_trajectory(id, content, T);
      for (int chan = 0; chan < synth_channel::kCount; ++chan) {
        const auto k = static_cast<size_t>(chan);
        for (int t = 0; t < T; t += 7) {
          const double removed =
              (styled(chan, t) - gen.rest_angle(chan) - style.bias[k]) / style.amp_scale[k];
          // the de-styled sample equals the base oscillation on a shifted grid
          const double cycles = 2 + content % 4;
          const double omega = 2.0 * M_PI * cycles / 64.0;
          const double base = gen.base_oscillation(content, chan, t + style.phase[k] / omega, 0.0);
          CHECK(removed == doctest::Approx(base).epsilon(1e-9));
        }
      }
    }
  }

  SUBCASE("clips are normalized and finite") {
    SynthGenerator gen(4, 2, 2);
    const MotionClip c = gen.make_clip(1, 1, 0, 64);
    CHECK(c.data.allFinite());
    CHECK(c.joints() == 25);
    CHECK(c.frames() == 64);
    // mid-hip temporal mean at origin after normalize
    CHECK(std::abs(c.data.row(body25::kMidHip).mean()) < 1e-5);
  }
}

TEST_CASE("raw-sequence container round trip") {
  const auto dir = temp_dir("rawio");
  Rng rng(31);
  RawSequence seq = make_sequence(5, 25.0);
  for (auto& f : seq.frames)
    for (int i = 0; i < f.size(); ++i) f(i) += static_cast<float>(0.001 * rng.normal());

  save_raw(seq, dir / "seq.txt");
  const RawSequence back = load_raw_sequence(dir / "seq.txt", InputFormat::clip_container);
  REQUIRE(back.frames.size() == seq.frames.size());
  CHECK(back.fps == seq.fps);
  CHECK(back.subject_id == seq.subject_id);
  for (size_t t = 0; t < seq.frames.size(); ++t) CHECK(back.frames[t] == seq.frames[t]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("clip container round trip is float-exact") {
  const auto dir = temp_dir("clipio");
  SynthGenerator gen(4, 2, 2);
  const MotionClip clip = gen.make_clip(0, 1, 0, 16);
  save_clip(clip, dir / "clip.txt");
  const MotionClip back = load_clip(dir / "clip.txt");
  CHECK(back.data == clip.data);
  CHECK(back.id_label == clip.id_label);
  CHECK(back.mc_label == clip.mc_label);
  std::filesystem::remove_all(dir);
}

TEST_CASE("openpose json directory loading") {
  const auto dir = temp_dir("openpose");

  auto write_frame = [&](const std::string& name, int numbers) {
    std::ofstream out(dir / name);
    out << R"({"version":1.3,"people":[{"pose_keypoints_2d":[)";
    for (int i = 0; i < numbers; ++i) {
      if (i) out << ",";
      out << (i * 0.5 + 1.0);
    }
    out << "]}]}";
  };

  SUBCASE("three frames of 75 numbers") {
    write_frame("frame_000.json", 75);
    write_frame("frame_001.json", 75);
    write_frame("frame_002.json", 75);
    const RawSequence seq = load_raw_sequence(dir, InputFormat::openpose_json_dir);
    REQUIRE(seq.frames.size() == 3);
    CHECK(seq.joints() == 25);
    CHECK(seq.frames[0](0, 0) == doctest::Approx(1.0));
    CHECK(seq.frames[0](0, 1) == doctest::Approx(1.5));
  }

  SUBCASE("74 numbers is a format error naming the frame") {
    write_frame("frame_000.json", 75);
    write_frame("frame_001.json", 74);
    try {
      load_raw_sequence(dir, InputFormat::openpose_json_dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("frame_001") != std::string::npos);
    }
  }

  SUBCASE("empty directory errors") {
    for (const auto& e : std::filesystem::directory_iterator(dir))
      std::filesystem::remove(e.path());
    CHECK_THROWS_AS(load_raw_sequence(dir, InputFormat::openpose_json_dir), FormatError);
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset manifest round trip") {
  const auto dir = temp_dir("manifest");
  DatasetIndex index = synth_generate(3, 2, 16, 13, 2);
  index.split_by_identity(1, 13);
  save_dataset(index, dir);
  const DatasetIndex back = load_dataset(dir / "manifest.json");
  CHECK(back.clip_count() == index.clip_count());
  CHECK(back.test_ids() == index.test_ids());
  const auto& orig = index.cell("id01", "mc01");
  const auto& loaded = back.cell("id01", "mc01");
  REQUIRE(loaded.size() == orig.size());
  CHECK(loaded[0].data == orig[0].data);
  CHECK(manifest_digest(dir / "manifest.json") != 0);
  std::filesystem::remove_all(dir);
}
