#pragma once

#include "idmr/common.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace idmr {

// Reverse-mode tape over dense matrices. A Tape is built per forward pass,
// values are available immediately, and backward(root) accumulates gradients
// for every node that leads to a grad-enabled leaf. Tapes are cheap, local
// objects; nothing here is shared between threads.
//
// Convention: a "column" is a time step, a "row" is a channel.
template <class T>
class Tape {
 public:
  using M = Mat<T>;
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  struct Node {
    M value;
    M grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    std::function<void(Tape&)> backward;  // empty for leaves/constants
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  Var constant(M v) { return push(std::move(v), false); }
  Var leaf(M v) { return push(std::move(v), true); }

  const M& val(Var v) const { return nodes_.at(check(v)).value; }

  // Gradient of the last backward() root w.r.t. v; zeros if v was not reached.
  M grad(Var v) const {
    const Node& n = nodes_.at(check(v));
    if (n.grad.size() == 0) return M::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool wants_grad(Var v) const { return nodes_.at(check(v)).requires_grad; }

  void accumulate(Var v, const M& g) {
    Node& n = nodes_.at(check(v));
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Clears gradients; values stay valid, nodes can keep being appended.
  void zero_grad() {
    for (auto& n : nodes_) n.grad.resize(0, 0);
  }

  void backward(Var root) {
    Node& r = nodes_.at(check(root));
    if (r.value.size() != 1)
      throw ConfigError("Tape::backward: root must be a scalar (1x1) node");
    if (!r.requires_grad) return;
    r.grad = M::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this);
    }
  }

  // ---- arithmetic -------------------------------------------------------

  Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    M out = val(a) + val(b);
    return unary_or_nary(std::move(out), {a, b}, [a, b](Tape& t, const M& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    M out = val(a) - val(b);
    return unary_or_nary(std::move(out), {a, b}, [a, b](Tape& t, const M& g) {
      t.accumulate(a, g);
      t.accumulate(b, M(-g));
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    M out = val(a).cwiseProduct(val(b));
    return unary_or_nary(std::move(out), {a, b}, [a, b](Tape& t, const M& g) {
      t.accumulate(a, g.cwiseProduct(t.val(b)));
      t.accumulate(b, g.cwiseProduct(t.val(a)));
    });
  }

  Var scale(Var a, T s) {
    M out = val(a) * s;
    return unary_or_nary(std::move(out), {a}, [a, s](Tape& t, const M& g) {
      t.accumulate(a, M(g * s));
    });
  }

  Var add_scalar(Var a, T c) {
    M out = val(a).array() + c;
    return unary_or_nary(std::move(out), {a}, [a](Tape& t, const M& g) {
      t.accumulate(a, g);
    });
  }

  Var matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows())
      throw ConfigError("matmul: inner dimensions differ");
    M out = val(a) * val(b);
    return unary_or_nary(std::move(out), {a, b}, [a, b](Tape& t, const M& g) {
      t.accumulate(a, M(g * t.val(b).transpose()));
      t.accumulate(b, M(t.val(a).transpose() * g));
    });
  }

  // x: (C x N), v: (C x 1), broadcast add over columns.
  Var add_colvec(Var x, Var v) {
    if (val(v).cols() != 1 || val(v).rows() != val(x).rows())
      throw ConfigError("add_colvec: v must be (rows(x) x 1)");
    M out = val(x);
    out.colwise() += Eigen::Matrix<T, Eigen::Dynamic, 1>(val(v).col(0));
    return unary_or_nary(std::move(out), {x, v}, [x, v](Tape& t, const M& g) {
      t.accumulate(x, g);
      t.accumulate(v, M(g.rowwise().sum()));
    });
  }

  // ---- nonlinearities ----------------------------------------------------

  Var leaky_relu(Var x, T slope) {
    const M& X = val(x);
    M out = X.unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
    return unary_or_nary(std::move(out), {x}, [x, slope](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx = g;
      for (Eigen::Index i = 0; i < gx.size(); ++i)
        if (X2(i) <= T(0)) gx(i) *= slope;
      t.accumulate(x, gx);
    });
  }

  // max(x, 0); subgradient 0 at the kink.
  Var relu(Var x) {
    const M& X = val(x);
    M out = X.cwiseMax(T(0));
    return unary_or_nary(std::move(out), {x}, [x](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx = g;
      for (Eigen::Index i = 0; i < gx.size(); ++i)
        if (X2(i) <= T(0)) gx(i) = T(0);
      t.accumulate(x, gx);
    });
  }

  Var abs(Var x) {
    const M& X = val(x);
    M out = X.cwiseAbs();
    return unary_or_nary(std::move(out), {x}, [x](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx = g;
      for (Eigen::Index i = 0; i < gx.size(); ++i) {
        T v = X2(i);
        gx(i) *= (v > T(0)) ? T(1) : (v < T(0) ? T(-1) : T(0));
      }
      t.accumulate(x, gx);
    });
  }

  Var softplus(Var x) {
    const M& X = val(x);
    M out = X.unaryExpr([](T v) {
      // max(v,0) + log1p(exp(-|v|)) is overflow-safe
      T a = v > T(0) ? v : T(0);
      return a + std::log1p(std::exp(-std::abs(v)));
    });
    return unary_or_nary(std::move(out), {x}, [x](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx = g;
      for (Eigen::Index i = 0; i < gx.size(); ++i) {
        T v = X2(i);
        T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                        : std::exp(v) / (T(1) + std::exp(v));
        gx(i) *= s;
      }
      t.accumulate(x, gx);
    });
  }

  // ---- normalization -----------------------------------------------------

  // Per-row standardization over columns with population variance.
  Var instance_norm(Var x, T eps) {
    const M& X = val(x);
    if (X.cols() < 1) throw ConfigError("instance_norm: empty input");
    const Eigen::Index C = X.rows(), N = X.cols();
    Eigen::Matrix<T, Eigen::Dynamic, 1> mean = X.rowwise().mean();
    M centered = X.colwise() - mean;
    Eigen::Matrix<T, Eigen::Dynamic, 1> var =
        centered.cwiseProduct(centered).rowwise().sum() / static_cast<T>(N);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std =
        (var.array() + eps).sqrt().inverse().matrix();
    M out = (centered.array().colwise() * inv_std.array()).matrix();
    Var y = unary_or_nary(M(out), {x}, nullptr);
    // backward needs y and inv_std; capture copies
    nodes_[static_cast<size_t>(y.id)].backward =
        [x, y, out, inv_std, C, N](Tape& t) {
          const M& g = t.nodes_[static_cast<size_t>(y.id)].grad;
          Eigen::Matrix<T, Eigen::Dynamic, 1> gmean = g.rowwise().mean();
          Eigen::Matrix<T, Eigen::Dynamic, 1> gymean =
              g.cwiseProduct(out).rowwise().sum() / static_cast<T>(N);
          M gx = g;
          gx.colwise() -= gmean;
          gx -= (out.array().colwise() * gymean.array()).matrix();
          gx = (gx.array().colwise() * inv_std.array()).matrix();
          t.accumulate(x, gx);
        };
    return y;
  }

  // ---- shape ops ---------------------------------------------------------

  Var mean_cols(Var x) {
    const M& X = val(x);
    const T n = static_cast<T>(X.cols());
    M out = X.rowwise().mean();
    return unary_or_nary(std::move(out), {x}, [x, n](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx(X2.rows(), X2.cols());
      gx.colwise() = Eigen::Matrix<T, Eigen::Dynamic, 1>(g.col(0) / n);
      t.accumulate(x, gx);
    });
  }

  Var broadcast_cols(Var v, Eigen::Index n) {
    const M& V = val(v);
    if (V.cols() != 1) throw ConfigError("broadcast_cols: input must be a column");
    M out(V.rows(), n);
    out.colwise() = Eigen::Matrix<T, Eigen::Dynamic, 1>(V.col(0));
    return unary_or_nary(std::move(out), {v}, [v](Tape& t, const M& g) {
      t.accumulate(v, M(g.rowwise().sum()));
    });
  }

  Var slice_rows(Var x, Eigen::Index r0, Eigen::Index nrows) {
    const M& X = val(x);
    if (r0 < 0 || r0 + nrows > X.rows()) throw ConfigError("slice_rows: out of range");
    M out = X.middleRows(r0, nrows);
    return unary_or_nary(std::move(out), {x}, [x, r0, nrows](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx = M::Zero(X2.rows(), X2.cols());
      gx.middleRows(r0, nrows) = g;
      t.accumulate(x, gx);
    });
  }

  // Column-major reinterpretation; total size must match.
  Var reshape(Var x, Eigen::Index r, Eigen::Index c) {
    const M& X = val(x);
    if (X.size() != r * c) throw ConfigError("reshape: size mismatch");
    M out = Eigen::Map<const M>(X.data(), r, c);
    const Eigen::Index xr = X.rows(), xc = X.cols();
    return unary_or_nary(std::move(out), {x}, [x, xr, xc](Tape& t, const M& g) {
      t.accumulate(x, M(Eigen::Map<const M>(g.data(), xr, xc)));
    });
  }

  Var hstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("hstack: no inputs");
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    for (Var p : parts) {
      if (val(p).rows() != rows) throw ConfigError("hstack: row mismatch");
      cols += val(p).cols();
    }
    M out(rows, cols);
    std::vector<Eigen::Index> offsets(parts.size());
    Eigen::Index at = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
      offsets[i] = at;
      out.middleCols(at, val(parts[i]).cols()) = val(parts[i]);
      at += val(parts[i]).cols();
    }
    return unary_or_nary(std::move(out), parts, [parts, offsets](Tape& t, const M& g) {
      for (size_t i = 0; i < parts.size(); ++i)
        t.accumulate(parts[i], M(g.middleCols(offsets[i], t.val(parts[i]).cols())));
    });
  }

  // Linear x2 upsampling along columns: out[2i] = x[i],
  // out[2i+1] = (x[i] + x[i+1]) / 2, last odd column replicates.
  Var upsample2(Var x) {
    const M& X = val(x);
    const Eigen::Index C = X.rows(), N = X.cols();
    M out(C, 2 * N);
    for (Eigen::Index i = 0; i < N; ++i) {
      out.col(2 * i) = X.col(i);
      if (i + 1 < N)
        out.col(2 * i + 1) = (X.col(i) + X.col(i + 1)) * T(0.5);
      else
        out.col(2 * i + 1) = X.col(i);
    }
    return unary_or_nary(std::move(out), {x}, [x, N](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      M gx = M::Zero(X2.rows(), X2.cols());
      for (Eigen::Index i = 0; i < N; ++i) {
        gx.col(i) += g.col(2 * i);
        if (i + 1 < N) {
          gx.col(i) += g.col(2 * i + 1) * T(0.5);
          gx.col(i + 1) += g.col(2 * i + 1) * T(0.5);
        } else {
          gx.col(i) += g.col(2 * i + 1);
        }
      }
      t.accumulate(x, gx);
    });
  }

  // ---- reductions --------------------------------------------------------

  Var sum_all(Var x) {
    M out(1, 1);
    out(0, 0) = val(x).sum();
    return unary_or_nary(std::move(out), {x}, [x](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      t.accumulate(x, M(M::Constant(X2.rows(), X2.cols(), g(0, 0))));
    });
  }

  Var mean_all(Var x) {
    const T n = static_cast<T>(val(x).size());
    M out(1, 1);
    out(0, 0) = val(x).sum() / n;
    return unary_or_nary(std::move(out), {x}, [x, n](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      t.accumulate(x, M(M::Constant(X2.rows(), X2.cols(), g(0, 0) / n)));
    });
  }

  // Frobenius norm with a denormal-level guard so the gradient is defined
  // at zero. The guard is invisible at double precision for norms >= 1e-13.
  Var norm2(Var x) {
    const M& X = val(x);
    T ss = X.squaredNorm() + kNormGuard;
    T nrm = std::sqrt(ss);
    M out(1, 1);
    out(0, 0) = nrm;
    return unary_or_nary(std::move(out), {x}, [x, nrm](Tape& t, const M& g) {
      t.accumulate(x, M(t.val(x) * (g(0, 0) / nrm)));
    });
  }

  // log(sum(exp(x))) over a column vector; gradient is softmax(x).
  Var logsumexp_col(Var x) {
    const M& X = val(x);
    if (X.cols() != 1) throw ConfigError("logsumexp_col: input must be a column");
    T m = X.maxCoeff();
    T s = (X.array() - m).exp().sum();
    M out(1, 1);
    out(0, 0) = m + std::log(s);
    return unary_or_nary(std::move(out), {x}, [x](Tape& t, const M& g) {
      const M& X2 = t.val(x);
      T m2 = X2.maxCoeff();
      Eigen::Array<T, Eigen::Dynamic, 1> e = (X2.array() - m2).exp();
      e /= e.sum();
      t.accumulate(x, M((e * g(0, 0)).matrix()));
    });
  }

  // ---- convolution -------------------------------------------------------

  // 1D temporal convolution. x: (C_in x N), w: (C_out x C_in*k) with the
  // column index laid out as c_in * k + tap, optional bias (C_out x 1).
  Var conv1d(Var x, Var w, std::optional<Var> bias, int k, int stride, int pad) {
    const M& X = val(x);
    const M& W = val(w);
    const Eigen::Index cin = X.rows(), n = X.cols();
    if (W.cols() != cin * k)
      throw ConfigError("conv1d: weight has " + std::to_string(W.cols()) +
                        " columns, expected " + std::to_string(cin * k));
    const Eigen::Index nout = (n + 2 * pad - k) / stride + 1;
    if (nout < 1) throw ConfigError("conv1d: output width < 1");

    M cols = M::Zero(cin * k, nout);
    for (Eigen::Index c = 0; c < cin; ++c)
      for (int j = 0; j < k; ++j) {
        const Eigen::Index row = c * k + j;
        for (Eigen::Index t = 0; t < nout; ++t) {
          const Eigen::Index src = t * stride + j - pad;
          if (src >= 0 && src < n) cols(row, t) = X(c, src);
        }
      }

    M out = W * cols;
    if (bias) {
      if (val(*bias).rows() != W.rows() || val(*bias).cols() != 1)
        throw ConfigError("conv1d: bias must be (C_out x 1)");
      out.colwise() += Eigen::Matrix<T, Eigen::Dynamic, 1>(val(*bias).col(0));
    }

    std::vector<Var> ins = {x, w};
    if (bias) ins.push_back(*bias);
    Var y = unary_or_nary(std::move(out), ins, nullptr);
    nodes_[static_cast<size_t>(y.id)].backward =
        [x, w, bias, y, cols, k, stride, pad, cin, n](Tape& t) {
          const M& g = t.nodes_[static_cast<size_t>(y.id)].grad;
          if (t.wants_grad(w)) t.accumulate(w, M(g * cols.transpose()));
          if (bias && t.wants_grad(*bias)) t.accumulate(*bias, M(g.rowwise().sum()));
          if (t.wants_grad(x)) {
            M gcols = t.val(w).transpose() * g;
            M gx = M::Zero(cin, n);
            for (Eigen::Index c = 0; c < cin; ++c)
              for (int j = 0; j < k; ++j) {
                const Eigen::Index row = c * k + j;
                for (Eigen::Index tt = 0; tt < gcols.cols(); ++tt) {
                  const Eigen::Index src = tt * stride + j - pad;
                  if (src >= 0 && src < n) gx(c, src) += gcols(row, tt);
                }
              }
            t.accumulate(x, gx);
          }
        };
    return y;
  }

  // ---- batch-all triplet loss (BA+) --------------------------------------

  // emb: (D x n) embeddings as columns. Averages the hinge
  //   max(scale*||e_a-e_p|| - scale*||e_a-e_n|| + delta, 0)
  // over all label-valid triples with strictly positive loss; 0 when every
  // triple satisfies the margin. Throws when no valid triple exists.
  Var batch_all_triplet(Var emb, const std::vector<int>& labels, T delta, T scale) {
    const M& E = val(emb);
    const int n = static_cast<int>(E.cols());
    if (n != static_cast<int>(labels.size()))
      throw ConfigError("batch_all_triplet: labels/embedding count mismatch");

    M dist(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        dist(i, j) = std::sqrt((E.col(i) - E.col(j)).squaredNorm() + kNormGuard);

    struct Triple {
      int a, p, neg;
    };
    std::vector<Triple> active;
    bool any_valid = false;
    // extended-precision accumulation keeps the collapsed-batch mean exact
    long double total = 0.0L;
    for (int a = 0; a < n; ++a)
      for (int p = 0; p < n; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        for (int q = 0; q < n; ++q) {
          if (labels[q] == labels[a]) continue;
          any_valid = true;
          T l = scale * dist(a, p) - scale * dist(a, q) + delta;
          if (l > T(0)) {
            active.push_back({a, p, q});
            total += static_cast<long double>(l);
          }
        }
      }
    if (!any_valid)
      throw ConfigError("batch_all_triplet: batch contains no valid (anchor, positive, negative) triple");

    const T kcount = static_cast<T>(active.size());
    M out(1, 1);
    out(0, 0) = active.empty()
                    ? T(0)
                    : static_cast<T>(total / static_cast<long double>(active.size()));

    Var y = unary_or_nary(std::move(out), {emb}, nullptr);
    if (!active.empty()) {
      nodes_[static_cast<size_t>(y.id)].backward =
          [emb, y, active, dist, scale, kcount](Tape& t) {
            const T g = t.nodes_[static_cast<size_t>(y.id)].grad(0, 0);
            const M& E2 = t.val(emb);
            M ge = M::Zero(E2.rows(), E2.cols());
            const T c = g * scale / kcount;
            for (const auto& tr : active) {
              Eigen::Matrix<T, Eigen::Dynamic, 1> up =
                  (E2.col(tr.a) - E2.col(tr.p)) / dist(tr.a, tr.p);
              Eigen::Matrix<T, Eigen::Dynamic, 1> un =
                  (E2.col(tr.a) - E2.col(tr.neg)) / dist(tr.a, tr.neg);
              ge.col(tr.a) += c * (up - un);
              ge.col(tr.p) -= c * up;
              ge.col(tr.neg) += c * un;
            }
            t.accumulate(emb, ge);
          };
    }
    return y;
  }

  static constexpr T kNormGuard = T(1e-30);

 private:
  std::vector<Node> nodes_;

  int check(Var v) const {
    if (!v.valid() || v.id >= size()) throw ConfigError("Tape: invalid Var");
    return v.id;
  }

  void require_same_shape(Var a, Var b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw ConfigError(std::string(op) + ": shape mismatch (" +
                        std::to_string(val(a).rows()) + "x" + std::to_string(val(a).cols()) +
                        " vs " + std::to_string(val(b).rows()) + "x" +
                        std::to_string(val(b).cols()) + ")");
  }

  Var push(M v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), M(), requires_grad, nullptr});
    return Var{size() - 1};
  }

  // Creates a node; fn receives (tape, upstream_grad) when non-null.
  Var unary_or_nary(M out, const std::vector<Var>& ins,
                    std::function<void(Tape&, const M&)> fn) {
    bool rg = false;
    for (Var v : ins) rg = rg || nodes_.at(check(v)).requires_grad;
    Var y = push(std::move(out), rg);
    if (rg && fn) {
      nodes_[static_cast<size_t>(y.id)].backward = [y, fn](Tape& t) {
        fn(t, t.nodes_[static_cast<size_t>(y.id)].grad);
      };
    }
    return y;
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace idmr
