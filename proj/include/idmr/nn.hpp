#pragma once

#include "idmr/autodiff.hpp"

#include <map>
#include <string>
#include <vector>

namespace idmr {

// Named parameter container with stable iteration order. Training owns the
// single mutable instance; inference binds values into a tape per call.
template <class T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Mat<T> value;
  };

  int add(const std::string& name, Mat<T> value) {
    if (index_.count(name)) throw ConfigError("ParamSet: duplicate parameter " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back({name, std::move(value)});
    return static_cast<int>(entries_.size()) - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamSet: unknown parameter " + name);
    return it->second;
  }

  Mat<T>& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Mat<T>& value(const std::string& name) const { return entries_[index_of(name)].value; }

  Mat<T>& value(int i) { return entries_.at(i).value; }
  const Mat<T>& value(int i) const { return entries_.at(i).value; }

  size_t count() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += static_cast<size_t>(e.value.size());
    return n;
  }

  uint64_t digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : entries_) {
      h = fnv1a64(e.name.data(), e.name.size(), h);
      h = digest_matrix(e.value, h);
    }
    return h;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

// Tape-bound view of a ParamSet: every parameter becomes a grad-enabled leaf
// (or a constant when frozen, e.g. discriminator weights inside the
// generator update).
template <class T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamSet<T>& params, bool trainable)
      : tape_(&tape), params_(&params) {
    vars_.reserve(params.count());
    for (const auto& e : params.entries())
      vars_.push_back(trainable ? tape.leaf(e.value) : tape.constant(e.value));
  }

  typename Tape<T>::Var operator[](const std::string& name) const {
    return vars_.at(static_cast<size_t>(params_->index_of(name)));
  }

  typename Tape<T>::Var at(int i) const { return vars_.at(static_cast<size_t>(i)); }
  size_t count() const { return vars_.size(); }

  // Gradient for parameter i after tape.backward().
  Mat<T> grad(int i) const { return tape_->grad(vars_[static_cast<size_t>(i)]); }

 private:
  Tape<T>* tape_;
  const ParamSet<T>* params_;
  std::vector<typename Tape<T>::Var> vars_;
};

// Fan-in scaled normal init, the usual choice for LeakyReLU stacks.
template <class T>
Mat<T> init_normal(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Mat<T> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      m(r, c) = static_cast<T>(rng.normal() * std_dev);
  return m;
}

template <class T>
Mat<T> zeros(Eigen::Index rows, Eigen::Index cols) {
  return Mat<T>::Zero(rows, cols);
}

// Adam with the decoupled-from-nothing classic formulation: weight decay is
// added to the gradient before the moment updates.
template <class T>
class Adam {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
  };

  Adam() = default;
  explicit Adam(Config cfg) : cfg_(cfg) {}

  void attach(const ParamSet<T>& params) {
    m_.clear();
    v_.clear();
    for (const auto& e : params.entries()) {
      m_.push_back(Mat<T>::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(Mat<T>::Zero(e.value.rows(), e.value.cols()));
    }
    t_ = 0;
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  const Config& config() const { return cfg_; }
  int64_t step_count() const { return t_; }

  // grads[i] pairs with params.value(i).
  void step(ParamSet<T>& params, const std::vector<Mat<T>>& grads) {
    if (grads.size() != params.count() || m_.size() != params.count())
      throw ConfigError("Adam::step: gradient/state count mismatch");
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
    const T wd = static_cast<T>(cfg_.weight_decay);
    for (size_t i = 0; i < params.count(); ++i) {
      Mat<T>& th = params.value(static_cast<int>(i));
      Mat<T> g = grads[i] + wd * th;
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseProduct(g);
      Mat<T> mhat = m_[i] / bc1;
      Mat<T> vhat = v_[i] / bc2;
      th -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
    }
  }

  // Serialization hooks for checkpoints.
  std::vector<Mat<T>>& moment1() { return m_; }
  std::vector<Mat<T>>& moment2() { return v_; }
  const std::vector<Mat<T>>& moment1() const { return m_; }
  const std::vector<Mat<T>>& moment2() const { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  Config cfg_;
  std::vector<Mat<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace idmr
