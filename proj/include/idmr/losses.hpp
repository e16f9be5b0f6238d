#pragma once

#include "idmr/model.hpp"

#include <array>

namespace idmr {

enum class GanForm { lsgan, log_form };
GanForm parse_gan_form(const std::string& s);

struct LossWeights {
  double lambda_rec = 10.0;
  double lambda_adv = 2.0;
  double lambda_mc = 2.0;
  double lambda_id = 6.0;
  double margin = 0.2;  // delta
};

struct LossReport {
  double l_rec = 0.0;     // motion reconstruction
  double l_adv = 0.0;     // generator-side adversarial
  double l_d = 0.0;       // discriminator objective (reported, not in total)
  double l_mc_rec = 0.0;
  double l_mc_tri = 0.0;
  double l_id_rec = 0.0;
  double l_id_tri = 0.0;
  double total = 0.0;
};

// total = lr*L_rec + la*L_adv + lmc*(L_mc_rec + L_mc_tri) + lid*(L_id_rec + L_id_tri).
// Throws NumericError naming the first non-finite term.
LossReport total_loss(double l_rec, double l_adv, double l_mc_rec, double l_mc_tri,
                      double l_id_rec, double l_id_tri, const LossWeights& w,
                      double l_d = 0.0);

// ---- tape builders (shared by training and the plain API) -------------------

// max(s*||a_pos - b_pos|| - s*||a_neg - b_neg|| + delta, 0)
template <class T>
typename Tape<T>::Var triplet_hinge(Tape<T>& tape, typename Tape<T>::Var anchor,
                                    typename Tape<T>::Var positive,
                                    typename Tape<T>::Var negative, T delta, T scale) {
  auto pos = tape.norm2(tape.sub(anchor, positive));
  auto neg = tape.norm2(tape.sub(anchor, negative));
  auto margin = tape.add_scalar(tape.sub(tape.scale(pos, scale), tape.scale(neg, scale)), delta);
  return tape.relu(margin);
}

template <class T>
typename Tape<T>::Var l1_mean(Tape<T>& tape, typename Tape<T>::Var a, typename Tape<T>::Var b) {
  return tape.mean_all(tape.abs(tape.sub(a, b)));
}

// Mean of per-branch elementwise-L1 means: (1/(3*numel)) sum_i |a_i - b_i|.
template <class T>
typename Tape<T>::Var branch_l1(Tape<T>& tape, const std::array<typename Tape<T>::Var, 3>& a,
                                const std::array<typename Tape<T>::Var, 3>& b) {
  auto s = tape.add(l1_mean(tape, a[0], b[0]), l1_mean(tape, a[1], b[1]));
  s = tape.add(s, l1_mean(tape, a[2], b[2]));
  return tape.scale(s, T(1) / T(3));
}

template <class T>
typename Tape<T>::Var id_reconstruction_node(Tape<T>& tape,
                                             const std::array<BundleVars<T>, 3>& real,
                                             const std::array<BundleVars<T>, 3>& resynth) {
  std::array<typename Tape<T>::Var, 3> fb_r, fb_s, fi_r, fi_s, h_r, h_s;
  for (int i = 0; i < 3; ++i) {
    fb_r[i] = real[i].f_bar_id;
    fb_s[i] = resynth[i].f_bar_id;
    fi_r[i] = real[i].f_id;
    fi_s[i] = resynth[i].f_id;
    h_r[i] = real[i].h_id;
    h_s[i] = resynth[i].h_id;
  }
  auto s = tape.add(branch_l1(tape, fb_r, fb_s), branch_l1(tape, fi_r, fi_s));
  s = tape.add(s, branch_l1(tape, h_r, h_s));
  return tape.scale(s, T(1) / T(3));
}

// ---- plain API ---------------------------------------------------------------

// Anchor is branch 2; positive branch 3 (same ID), negative branch 1.
template <class T>
T id_triplet(const Mat<T>& h1, const Mat<T>& h2, const Mat<T>& h3, T delta) {
  if (h1.rows() != h2.rows() || h2.rows() != h3.rows())
    throw ConfigError("id_triplet: shape mismatch");
  Tape<T> tape;
  const T scale = T(1) / static_cast<T>(h1.rows());
  auto v = triplet_hinge(tape, tape.constant(h2), tape.constant(h3), tape.constant(h1),
                         delta, scale);
  return tape.val(v)(0, 0);
}

// Anchor is branch 2; positive branch 1 (same MC), negative branch 3.
template <class T>
T mc_triplet(const Mat<T>& f1, const Mat<T>& f2, const Mat<T>& f3, T delta) {
  if (f1.rows() != f2.rows() || f1.cols() != f2.cols())
    throw ConfigError("mc_triplet: shape mismatch");
  Tape<T> tape;
  const T scale = T(1) / static_cast<T>(f1.size());
  auto v = triplet_hinge(tape, tape.constant(f2), tape.constant(f1), tape.constant(f3),
                         delta, scale);
  return tape.val(v)(0, 0);
}

// BA+ batch-all: mean hinge over all valid triples with strictly positive
// loss. Throws when the labels admit no triple at all.
template <class T>
T batch_all_triplet(const std::vector<Mat<T>>& embeddings, const std::vector<int>& labels,
                    T delta, T distance_scale) {
  if (embeddings.empty()) throw ConfigError("batch_all_triplet: empty batch");
  Tape<T> tape;
  std::vector<typename Tape<T>::Var> cols;
  cols.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    if (e.cols() != 1)
      cols.push_back(tape.reshape(tape.constant(e), e.size(), 1));
    else
      cols.push_back(tape.constant(e));
  }
  auto emb = tape.hstack(cols);
  return tape.val(tape.batch_all_triplet(emb, labels, delta, distance_scale))(0, 0);
}

template <class T>
T id_reconstruction(const std::array<LatentBundleT<T>, 3>& real,
                    const std::array<LatentBundleT<T>, 3>& resynth) {
  Tape<T> tape;
  std::array<BundleVars<T>, 3> r, s;
  for (int i = 0; i < 3; ++i) {
    r[i] = {tape.constant(real[i].f_mc.size() ? real[i].f_mc : Mat<T>::Zero(1, 1)),
            tape.constant(real[i].f_id), tape.constant(real[i].f_bar_id),
            tape.constant(real[i].h_id)};
    s[i] = {tape.constant(resynth[i].f_mc.size() ? resynth[i].f_mc : Mat<T>::Zero(1, 1)),
            tape.constant(resynth[i].f_id), tape.constant(resynth[i].f_bar_id),
            tape.constant(resynth[i].h_id)};
  }
  return tape.val(id_reconstruction_node(tape, r, s))(0, 0);
}

template <class T>
T mc_reconstruction(const std::array<Mat<T>, 3>& real, const std::array<Mat<T>, 3>& resynth) {
  Tape<T> tape;
  std::array<typename Tape<T>::Var, 3> a, b;
  for (int i = 0; i < 3; ++i) {
    a[i] = tape.constant(real[i]);
    b[i] = tape.constant(resynth[i]);
  }
  return tape.val(branch_l1(tape, a, b))(0, 0);
}

// Mean elementwise L1 over the nine (j|k) pairs.
template <class T>
T motion_reconstruction(const std::array<std::array<Mat<T>, 3>, 3>& grid_sys,
                        const std::array<std::array<Mat<T>, 3>, 3>& grid_truth) {
  Tape<T> tape;
  typename Tape<T>::Var sum;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      if (grid_truth[j][k].size() == 0)
        throw ConfigError("motion_reconstruction: missing ground-truth cell (" +
                          std::to_string(j + 1) + "," + std::to_string(k + 1) + ")");
      auto term = l1_mean(tape, tape.constant(grid_sys[j][k]), tape.constant(grid_truth[j][k]));
      sum = (j == 0 && k == 0) ? term : tape.add(sum, term);
    }
  return tape.val(tape.scale(sum, T(1) / T(9)))(0, 0);
}

// LSGAN by default (targets 1 real / 0 fake); the saturating-log form of the
// printed objective sits behind the switch, squashed through a sigmoid.
template <class T>
std::pair<T, T> adversarial_losses(const std::vector<T>& real_scores,
                                   const std::vector<T>& fake_scores,
                                   GanForm form = GanForm::lsgan) {
  auto mean_of = [](const std::vector<T>& v, auto f) {
    if (v.empty()) return T(0);
    T s = T(0);
    for (T x : v) s += f(x);
    return s / static_cast<T>(v.size());
  };
  if (form == GanForm::lsgan) {
    T d = T(0.5) * mean_of(real_scores, [](T s) { return (s - T(1)) * (s - T(1)); }) +
          T(0.5) * mean_of(fake_scores, [](T s) { return s * s; });
    T g = T(0.5) * mean_of(fake_scores, [](T s) { return (s - T(1)) * (s - T(1)); });
    return {d, g};
  }
  auto sp = [](T x) {
    T a = x > T(0) ? x : T(0);
    return a + std::log1p(std::exp(-std::abs(x)));
  };
  T d = T(0.5) * mean_of(real_scores, [&](T s) { return sp(-s); }) +
        T(0.5) * mean_of(fake_scores, [&](T s) { return sp(s); });
  T g = T(0.5) * mean_of(fake_scores, [&](T s) { return sp(-s); });
  return {d, g};
}

}  // namespace idmr
