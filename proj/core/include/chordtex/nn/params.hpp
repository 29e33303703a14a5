#pragma once

#include "chordtex/error.hpp"
#include "chordtex/nn/tape.hpp"
#include "chordtex/rng.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace chordtex::nn {

// Named trainable parameters with Adam state. Tape graphs reference entries
// through param nodes; gradients flow back into the entry's grad matrix.
template <typename T>
class ParamStore {
 public:
  struct Handle {
    int idx = -1;
  };

  struct Entry {
    std::string name;
    Mat<T> value, grad, adam_m, adam_v;
  };

  // Uniform init in [-range, range]; range 0 gives zeros (biases).
  Handle add(const std::string& name, int rows, int cols, double range, Rng& rng) {
    if (index_.count(name)) throw DataError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.value.resize(rows, cols);
    if (range == 0.0) {
      e.value.setZero();
    } else {
      rng.fillUniform(e.value, -range, range);
    }
    e.grad = Mat<T>::Zero(rows, cols);
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return Handle{static_cast<int>(entries_.size()) - 1};
  }

  // Standard fan-in scaling for weight matrices shaped (out x in).
  Handle addFanIn(const std::string& name, int rows, int cols, Rng& rng) {
    return add(name, rows, cols, 1.0 / std::sqrt(static_cast<double>(cols)), rng);
  }

  Mat<T>& value(Handle h) { return entries_[h.idx].value; }
  const Mat<T>& value(Handle h) const { return entries_[h.idx].value; }
  Mat<T>& grad(Handle h) { return entries_[h.idx].grad; }

  Var node(Tape<T>& t, Handle h) { return t.param(&entries_[h.idx].value, &entries_[h.idx].grad); }

  void zeroGrad() {
    for (auto& e : entries_) e.grad.setZero();
  }

  double gradNormSq() const {
    double s = 0;
    for (const auto& e : entries_) s += static_cast<double>(e.grad.squaredNorm());
    return s;
  }

  // Global-norm clipping; returns the pre-clip norm.
  double clipGradNorm(double max_norm) {
    double norm = std::sqrt(gradNormSq());
    if (norm > max_norm && norm > 0) {
      T factor = static_cast<T>(max_norm / norm);
      for (auto& e : entries_) e.grad *= factor;
    }
    return norm;
  }

  void adamStep(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++adam_t_;
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(beta1, adam_t_));
    const T corr2 = static_cast<T>(1.0 - std::pow(beta2, adam_t_));
    for (auto& e : entries_) {
      if (e.adam_m.size() == 0) {
        e.adam_m = Mat<T>::Zero(e.value.rows(), e.value.cols());
        e.adam_v = Mat<T>::Zero(e.value.rows(), e.value.cols());
      }
      e.adam_m = b1 * e.adam_m + (T(1) - b1) * e.grad;
      e.adam_v = (b2 * e.adam_v.array() + (T(1) - b2) * e.grad.array().square()).matrix();
      e.value.array() -= static_cast<T>(lr) * (e.adam_m.array() / corr1) /
                         ((e.adam_v.array() / corr2).sqrt() + static_cast<T>(eps));
    }
  }

  int64_t adamT() const { return adam_t_; }
  void setAdamT(int64_t t) { adam_t_ = t; }

  size_t count() const { return entries_.size(); }
  Entry& entry(size_t i) { return entries_[i]; }
  const Entry& entry(size_t i) const { return entries_[i]; }

  Handle find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter: " + name);
    return Handle{it->second};
  }

  int64_t scalarCount() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
  int64_t adam_t_ = 0;
};

}  // namespace chordtex::nn
