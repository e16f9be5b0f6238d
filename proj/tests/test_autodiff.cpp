#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace idmr;
using idmr::test::grad_check;
using idmr::test::random_matrix;

TEST_CASE("tape values match hand arithmetic") {
  TapeD tape;
  MatD a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  auto va = tape.constant(a), vb = tape.constant(b);
  CHECK(tape.val(tape.add(va, vb))(1, 1) == 12.0);
  CHECK(tape.val(tape.sub(va, vb))(0, 0) == -4.0);
  CHECK(tape.val(tape.mul(va, vb))(0, 1) == 12.0);
  CHECK(tape.val(tape.matmul(va, vb))(0, 0) == doctest::Approx(19.0));
  CHECK(tape.val(tape.mean_all(va))(0, 0) == doctest::Approx(2.5));
  CHECK(tape.val(tape.sum_all(vb))(0, 0) == doctest::Approx(26.0));
  CHECK(tape.val(tape.norm2(va))(0, 0) == doctest::Approx(std::sqrt(30.0)));
}

TEST_CASE("instance_norm standardizes each channel") {
  TapeD tape;
  MatD x(2, 4);
  x << 1, 2, 3, 4, 5, 5, 5, 5;
  auto y = tape.val(tape.instance_norm(tape.constant(x), 1e-5));
  // scalar oracle for channel 0: mean 2.5, population var 1.25
  const double s = std::sqrt(1.25 + 1e-5);
  for (int t = 0; t < 4; ++t)
    CHECK(y(0, t) == doctest::Approx(((t + 1) - 2.5) / s).epsilon(1e-12));
  // constant channel collapses to ~0
  for (int t = 0; t < 4; ++t) CHECK(std::abs(y(1, t)) < 1e-9);
}

TEST_CASE("upsample2 interpolates linearly and doubles the width") {
  TapeD tape;
  MatD x(1, 3);
  x << 0, 2, 6;
  auto y = tape.val(tape.upsample2(tape.constant(x)));
  REQUIRE(y.cols() == 6);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 1.0);
  CHECK(y(0, 2) == 2.0);
  CHECK(y(0, 3) == 4.0);
  CHECK(y(0, 4) == 6.0);
  CHECK(y(0, 5) == 6.0);
}

TEST_CASE("conv1d matches a direct correlation oracle") {
  Rng rng(11);
  MatD x = random_matrix(2, 5, rng);
  MatD w = random_matrix(3, 2 * 3, rng);  // C_out=3, k=3
  TapeD tape;
  auto y = tape.val(tape.conv1d(tape.constant(x), tape.constant(w), std::nullopt, 3, 1, 1));
  REQUIRE(y.rows() == 3);
  REQUIRE(y.cols() == 5);
  for (int co = 0; co < 3; ++co)
    for (int t = 0; t < 5; ++t) {
      double acc = 0;
      for (int ci = 0; ci < 2; ++ci)
        for (int j = 0; j < 3; ++j) {
          const int src = t + j - 1;
          if (src >= 0 && src < 5) acc += w(co, ci * 3 + j) * x(ci, src);
        }
      CHECK(y(co, t) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("conv1d stride-2 width arithmetic") {
  Rng rng(3);
  MatD x = random_matrix(4, 64, rng);
  MatD w = random_matrix(8, 4 * 3, rng);
  TapeD tape;
  auto y = tape.conv1d(tape.constant(x), tape.constant(w), std::nullopt, 3, 2, 1);
  CHECK(tape.val(y).cols() == 32);
}

TEST_CASE("primitive gradients match central differences") {
  Rng rng(42);
  const double kTol = 1e-6;  // primitives should be much tighter than 1e-4

  SUBCASE("add/mul/matmul chain") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      return t.mean_all(t.mul(t.matmul(in[0], in[1]), t.add(in[2], in[2])));
    };
    CHECK(grad_check(build, {random_matrix(3, 2, rng), random_matrix(2, 4, rng),
                             random_matrix(3, 4, rng)}) < kTol);
  }
  SUBCASE("conv1d with bias") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      return t.mean_all(t.conv1d(in[0], in[1], in[2], 3, 2, 1));
    };
    CHECK(grad_check(build, {random_matrix(3, 8, rng), random_matrix(4, 9, rng),
                             random_matrix(4, 1, rng)}) < kTol);
  }
  SUBCASE("instance_norm") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      // random projection to a scalar so all entries matter
      MatD proj(3, 6);
      for (int i = 0; i < proj.size(); ++i) proj(i) = std::sin(1.0 + i);
      return t.sum_all(t.mul(t.instance_norm(in[0], 1e-5), t.constant(proj)));
    };
    CHECK(grad_check(build, {random_matrix(3, 6, rng)}) < 1e-5);
  }
  SUBCASE("leaky_relu, softplus, abs away from kinks") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      return t.mean_all(t.abs(t.softplus(t.leaky_relu(in[0], 0.2))));
    };
    MatD x = random_matrix(3, 4, rng);
    for (int i = 0; i < x.size(); ++i)
      if (std::abs(x(i)) < 0.05) x(i) = 0.3;  // keep clear of the relu kink
    CHECK(grad_check(build, {x}) < kTol);
  }
  SUBCASE("norm2 and mean_cols") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      return t.norm2(t.mean_cols(in[0]));
    };
    CHECK(grad_check(build, {random_matrix(4, 5, rng)}) < kTol);
  }
  SUBCASE("upsample2 / slice / reshape / hstack / broadcast") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      auto up = t.upsample2(in[0]);
      auto sl = t.slice_rows(up, 1, 2);
      auto re = t.reshape(sl, 4, sl.valid() ? t.val(sl).size() / 4 : 1);
      auto st = t.hstack({re, re});
      return t.mean_all(t.mul(st, t.broadcast_cols(in[1], t.val(st).cols())));
    };
    CHECK(grad_check(build, {random_matrix(4, 6, rng), random_matrix(4, 1, rng)}) < kTol);
  }
  SUBCASE("logsumexp") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      return t.logsumexp_col(in[0]);
    };
    CHECK(grad_check(build, {random_matrix(5, 1, rng)}) < kTol);
  }
  SUBCASE("batch_all_triplet") {
    auto build = [](TapeD& t, const std::vector<TapeD::Var>& in) {
      return t.batch_all_triplet(in[0], {0, 0, 1, 1, 2}, 0.4, 0.25);
    };
    CHECK(grad_check(build, {random_matrix(3, 5, rng)}) < 1e-5);
  }
}

TEST_CASE("gradient accumulates over repeated inputs") {
  // d/dx mean(x * x) via the same var twice
  TapeD tape;
  MatD x(2, 2);
  x << 1, 2, 3, 4;
  auto v = tape.leaf(x);
  auto y = tape.mean_all(tape.mul(v, v));
  tape.backward(y);
  const MatD g = tape.grad(v);
  for (int i = 0; i < 4; ++i) CHECK(g(i) == doctest::Approx(2.0 * x(i) / 4.0));
}

TEST_CASE("backward only reaches grad-enabled leaves") {
  TapeD tape;
  auto c = tape.constant(MatD::Ones(2, 2));
  auto l = tape.leaf(MatD::Ones(2, 2));
  auto y = tape.mean_all(tape.mul(c, l));
  tape.backward(y);
  CHECK(tape.grad(l).sum() == doctest::Approx(1.0));
  CHECK(tape.grad(c).sum() == 0.0);  // constants collect nothing
}
