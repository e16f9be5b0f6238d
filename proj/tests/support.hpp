#pragma once

#include "idmr/autodiff.hpp"
#include "idmr/nn.hpp"

#include <functional>
#include <vector>

namespace idmr::test {

inline MatD random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  MatD m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

inline MatF random_matrix_f(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  return random_matrix(r, c, rng, scale).cast<float>();
}

using BuildFn =
    std::function<TapeD::Var(TapeD&, const std::vector<TapeD::Var>&)>;

// Central-difference gradient check: builds the scalar function twice per
// perturbed entry and compares against the tape's analytic gradients.
// Error metric: |a - n| / max(1e-3, |a|, |n|), reduced with max.
inline double grad_check(const BuildFn& build, const std::vector<MatD>& inputs,
                         double h = 1e-5) {
  // analytic
  TapeD tape;
  std::vector<TapeD::Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  TapeD::Var root = build(tape, leaves);
  tape.backward(root);
  std::vector<MatD> analytic;
  analytic.reserve(inputs.size());
  for (auto v : leaves) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<MatD>& xs) {
    TapeD t;
    std::vector<TapeD::Var> cs;
    cs.reserve(xs.size());
    for (const auto& m : xs) cs.push_back(t.constant(m));
    return t.val(build(t, cs))(0, 0);
  };

  double max_err = 0.0;
  std::vector<MatD> work = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      const double x0 = work[i](k);
      const double step = h * std::max(1.0, std::abs(x0));
      work[i](k) = x0 + step;
      const double fp = eval(work);
      work[i](k) = x0 - step;
      const double fm = eval(work);
      work[i](k) = x0;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[i](k);
      const double err = std::abs(a - numeric) / std::max({1e-3, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

using ParamBuildFn = std::function<TapeD::Var(TapeD&, const BoundParams<double>&, TapeD::Var)>;

// Gradient check through the production graph builders: differentiates the
// scalar output w.r.t. every parameter in `params` and the input matrix.
inline double grad_check_params(const ParamBuildFn& build, ParamSet<double>& params,
                                const MatD& input, double h = 1e-5) {
  std::vector<MatD> analytic;
  MatD analytic_input;
  {
    TapeD tape;
    BoundParams<double> bp(tape, params, /*trainable=*/true);
    TapeD::Var x = tape.leaf(input);
    TapeD::Var root = build(tape, bp, x);
    tape.backward(root);
    for (size_t i = 0; i < params.count(); ++i) analytic.push_back(bp.grad(static_cast<int>(i)));
    analytic_input = tape.grad(x);
  }

  auto eval = [&](const MatD& x) {
    TapeD tape;
    BoundParams<double> bp(tape, params, false);
    return tape.val(build(tape, bp, tape.constant(x)))(0, 0);
  };

  double max_err = 0.0;
  auto update = [&](double a, double numeric) {
    const double err = std::abs(a - numeric) / std::max({1e-3, std::abs(a), std::abs(numeric)});
    max_err = std::max(max_err, err);
  };

  for (size_t i = 0; i < params.count(); ++i) {
    MatD& value = params.value(static_cast<int>(i));
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double x0 = value(k);
      const double step = h * std::max(1.0, std::abs(x0));
      value(k) = x0 + step;
      const double fp = eval(input);
      value(k) = x0 - step;
      const double fm = eval(input);
      value(k) = x0;
      update(analytic[i](k), (fp - fm) / (2.0 * step));
    }
  }
  MatD work = input;
  for (Eigen::Index k = 0; k < input.size(); ++k) {
    const double x0 = work(k);
    const double step = h * std::max(1.0, std::abs(x0));
    work(k) = x0 + step;
    const double fp = eval(work);
    work(k) = x0 - step;
    const double fm = eval(work);
    work(k) = x0;
    update(analytic_input(k), (fp - fm) / (2.0 * step));
  }
  return max_err;
}

}  // namespace idmr::test
