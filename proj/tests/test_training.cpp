#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idmr/synthetic.hpp"
#include "idmr/training.hpp"
#include "support.hpp"

#include <filesystem>

using namespace idmr;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("idmr_train_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// small-but-real setup: T=16 clips, divisor-8 channels
struct Fixture {
  ModelConfig model_cfg;
  TrainConfig train_cfg;
  DatasetIndex data;

  Fixture() {
    model_cfg = ModelConfig::desk_scale(8);
    model_cfg.frames = 16;
    model_cfg.validate();
    train_cfg = TrainConfig::desk_scale();
    train_cfg.batch_size = 3;
    train_cfg.max_epochs = 1;
    train_cfg.steps_per_epoch = 2;
    train_cfg.seed = 99;
    data = synth_generate(3, 3, 16, 1001, 2);
  }

  Trainer make_trainer() const {
    return Trainer(Model::init(model_cfg, train_cfg.seed), train_cfg, data);
  }

  std::vector<TripletSample> batch(uint64_t seed, int n) const {
    Rng rng(seed);
    std::vector<TripletSample> out;
    for (int i = 0; i < n; ++i) out.push_back(sample_triplet(data, rng));
    return out;
  }
};

bool reports_equal(const LossReport& a, const LossReport& b) {
  return a.l_rec == b.l_rec && a.l_adv == b.l_adv && a.l_d == b.l_d &&
         a.l_mc_rec == b.l_mc_rec && a.l_mc_tri == b.l_mc_tri && a.l_id_rec == b.l_id_rec &&
         a.l_id_tri == b.l_id_tri && a.total == b.total;
}

}  // namespace

TEST_CASE("lr_at_epoch follows the 0.5-every-400 schedule") {
  TrainConfig cfg;  // paper-scale defaults
  CHECK(lr_at_epoch(cfg, 0) == std::pair<double, double>{1e-4, 2e-4});
  CHECK(lr_at_epoch(cfg, 399).first == doctest::Approx(1e-4));
  CHECK(lr_at_epoch(cfg, 400).first == doctest::Approx(5e-5));
  CHECK(lr_at_epoch(cfg, 400).second == doctest::Approx(1e-4));
  CHECK(lr_at_epoch(cfg, 1999).first == doctest::Approx(6.25e-6));
  CHECK(lr_at_epoch(cfg, 1999).second == doctest::Approx(1.25e-5));

  double prev = std::numeric_limits<double>::max();
  for (int e = 0; e < 2000; e += 37) {
    const double lr = lr_at_epoch(cfg, e).first;
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("zero learning rates leave parameters untouched") {
  Fixture fx;
  fx.train_cfg.ae_lr = 0.0;
  fx.train_cfg.d_lr = 0.0;
  Trainer trainer = fx.make_trainer();
  const uint64_t gen_digest = trainer.model().gen.digest();
  const uint64_t disc_digest = trainer.model().disc.digest();
  const LossReport r = trainer.train_step(fx.batch(7, 3));
  CHECK(std::isfinite(r.total));
  CHECK(r.total > 0.0);
  CHECK(trainer.model().gen.digest() == gen_digest);
  CHECK(trainer.model().disc.digest() == disc_digest);
}

TEST_CASE("nine decoder invocations per triplet") {
  Fixture fx;
  Trainer trainer = fx.make_trainer();
  trainer.train_step(fx.batch(8, 3));
  CHECK(trainer.last_step_stats().decoder_invocations == 9 * 3);
  CHECK(trainer.last_step_stats().reencode_invocations == 3 * 3);
}

TEST_CASE("updates are isolated per optimizer") {
  Fixture fx;

  SUBCASE("discriminator lr 0: generator moves, discriminator does not") {
    fx.train_cfg.d_lr = 0.0;
    Trainer trainer = fx.make_trainer();
    const uint64_t disc_digest = trainer.model().disc.digest();
    const uint64_t gen_digest = trainer.model().gen.digest();
    trainer.train_step(fx.batch(9, 3));
    CHECK(trainer.model().disc.digest() == disc_digest);
    CHECK(trainer.model().gen.digest() != gen_digest);
  }

  SUBCASE("generator lr 0: discriminator moves, generator does not") {
    fx.train_cfg.ae_lr = 0.0;
    Trainer trainer = fx.make_trainer();
    const uint64_t disc_digest = trainer.model().disc.digest();
    const uint64_t gen_digest = trainer.model().gen.digest();
    trainer.train_step(fx.batch(10, 3));
    CHECK(trainer.model().disc.digest() != disc_digest);
    CHECK(trainer.model().gen.digest() == gen_digest);
  }
}

TEST_CASE("seeded determinism over 10 steps") {
  Fixture fx;
  Trainer a = fx.make_trainer();
  Trainer b = fx.make_trainer();
  for (int s = 0; s < 10; ++s) {
    const auto batch = fx.batch(100 + static_cast<uint64_t>(s), 3);
    const LossReport ra = a.train_step(batch);
    const LossReport rb = b.train_step(batch);
    CAPTURE(s);
    REQUIRE(reports_equal(ra, rb));
  }
  CHECK(a.model().gen.digest() == b.model().gen.digest());
  CHECK(a.model().disc.digest() == b.model().disc.digest());
}

TEST_CASE("invalid batches are rejected") {
  Fixture fx;
  Trainer trainer = fx.make_trainer();
  auto batch = fx.batch(11, 2);
  batch[1].m2.id_label = batch[1].m1.id_label;  // break the constraint
  CHECK_THROWS_AS(trainer.train_step(batch), ConfigError);
  CHECK_THROWS_AS(trainer.train_step({}), ConfigError);
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit-for-bit") {
  const auto dir = temp_dir("ckpt");
  Fixture fx;
  Trainer trainer = fx.make_trainer();
  trainer.train_step(fx.batch(12, 3));  // move off the init point
  trainer.save_checkpoint(dir / "model.ckpt");

  Trainer loaded = Trainer::load_checkpoint(dir / "model.ckpt", fx.data);
  CHECK(loaded.model().gen.digest() == trainer.model().gen.digest());
  CHECK(loaded.model().disc.digest() == trainer.model().disc.digest());

  const MotionClip probe = fx.data.all_clips().front();
  const LatentBundle a = encode(probe, trainer.model());
  const LatentBundle b = encode(probe, loaded.model());
  CHECK(a.f_mc == b.f_mc);
  CHECK(a.h_id == b.h_id);
  const MotionClip sa = synthesize(a.f_mc, a.f_bar_id, trainer.model());
  const MotionClip sb = synthesize(b.f_mc, b.f_bar_id, loaded.model());
  CHECK(sa.data == sb.data);
  CHECK(discriminate(sa.data, trainer.model()) == discriminate(sb.data, loaded.model()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume from checkpoint matches an uninterrupted run") {
  const auto dir = temp_dir("resume");
  Fixture fx;
  fx.train_cfg.max_epochs = 3;
  fx.train_cfg.checkpoint_every_epochs = 0;  // only final saves

  // uninterrupted: 3 epochs straight
  Trainer straight = fx.make_trainer();
  straight.fit();

  // interrupted: 2 epochs, checkpoint, reload, 1 more epoch
  TrainConfig first_leg = fx.train_cfg;
  first_leg.max_epochs = 2;
  Trainer part(Model::init(fx.model_cfg, fx.train_cfg.seed), first_leg, fx.data);
  part.fit();
  part.save_checkpoint(dir / "leg1.ckpt");

  Trainer resumed = Trainer::load_checkpoint(dir / "leg1.ckpt", fx.data);
  CHECK(resumed.epoch() == 2);
  resumed.set_max_epochs(3);
  resumed.fit();

  CHECK(resumed.model().gen.digest() == straight.model().gen.digest());
  CHECK(resumed.model().disc.digest() == straight.model().disc.digest());
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero-epoch fit leaves the checkpoint at initialization") {
  const auto dir = temp_dir("zeroepoch");
  Fixture fx;
  fx.train_cfg.max_epochs = 0;
  Trainer trainer = fx.make_trainer();
  const uint64_t init_digest = trainer.model().gen.digest();
  trainer.fit({}, dir / "init.ckpt");
  Trainer loaded = Trainer::load_checkpoint(dir / "init.ckpt", fx.data);
  CHECK(loaded.model().gen.digest() == init_digest);
  CHECK(loaded.epoch() == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fit writes one metrics record per step") {
  const auto dir = temp_dir("metrics");
  Fixture fx;
  Trainer trainer = fx.make_trainer();
  trainer.fit(dir / "metrics.jsonl", {});
  std::ifstream in(dir / "metrics.jsonl");
  REQUIRE(in.good());
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("\"l_rec\"") != std::string::npos);
    CHECK(line.find("\"ae_lr\"") != std::string::npos);
    CHECK(line.find("\"total\"") != std::string::npos);
  }
  CHECK(lines == fx.train_cfg.max_epochs * fx.train_cfg.steps_per_epoch);
  std::filesystem::remove_all(dir);
}

TEST_CASE("retarget degenerate case and shape") {
  Fixture fx;
  const Model model = Model::init(fx.model_cfg, 5);
  const MotionClip m = fx.data.all_clips().front();
  const MotionClip rec = retarget(m, m, model);
  CHECK(rec.data.rows() == 50);
  CHECK(rec.data.cols() == 16);
  const LatentBundle b = encode(m, model);
  const MotionClip direct = synthesize(b.f_mc, b.f_bar_id, model);
  CHECK(rec.data == direct.data);
}
