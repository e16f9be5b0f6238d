#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idmr/model.hpp"
#include "idmr/synthetic.hpp"
#include "support.hpp"

using namespace idmr;
using idmr::test::grad_check_params;
using idmr::test::random_matrix;
using idmr::test::random_matrix_f;

TEST_CASE("discriminator configuration") {
  const ModelConfig cfg = ModelConfig::full_scale();
  const DiscriminatorConfig d = cfg.discriminator();
  CHECK(d.channels.back() == 256);
  CHECK(d.channels.size() == 4);
  CHECK(ModelConfig::desk_scale().discriminator().channels.back() == 64);
}

TEST_CASE("discriminate scores one scalar per clip, deterministically") {
  const Model model = Model::init(ModelConfig::desk_scale(), 21);
  Rng rng(22);
  std::vector<MatF> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_matrix_f(50, 64, rng));

  std::vector<float> scores;
  for (const auto& clip : batch) scores.push_back(discriminate(clip, model));
  CHECK(scores.size() == batch.size());

  // determinism + batch-composition invariance: scoring in any grouping or
  // order reproduces the same per-clip value
  for (size_t i = batch.size(); i-- > 0;)
    CHECK(discriminate(batch[i], model) == scores[i]);
}

TEST_CASE("discriminate rejects wrong shapes") {
  const Model model = Model::init(ModelConfig::desk_scale(), 23);
  Rng rng(24);
  CHECK_THROWS_AS(discriminate(random_matrix_f(30, 64, rng), model), ConfigError);
}

TEST_CASE("tiny discriminator gradients match finite differences") {
  Rng rng(25);
  DiscriminatorConfig cfg;
  cfg.channels = {4, 4};
  ParamSet<double> params;
  make_discriminator_params(params, 3, cfg, rng);
  auto build = [&](TapeD& t, const BoundParams<double>& bp, TapeD::Var x) {
    return discriminator_forward(t, bp, cfg, x);
  };
  CHECK(grad_check_params(build, params, random_matrix(3, 8, rng)) < 1e-4);
}
