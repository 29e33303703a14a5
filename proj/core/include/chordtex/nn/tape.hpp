#pragma once

#include <Eigen/Core>

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace chordtex::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Handle into a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape over Eigen matrices. Convention: rows are
// batch items, columns are features. Parameters live outside the tape (see
// ParamStore); their gradients are flushed into external sinks during
// backward(). Buffers are freed as backward() walks the tape, so node values
// must be read before calling it.
template <typename T>
class Tape {
 public:
  using M = Mat<T>;
  using BackFn = std::function<void(Tape&, int)>;

  Var input(M value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, {}, nullptr, false, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var param(const M* value, M* grad_sink) {
    nodes_.push_back(Node{{}, {}, value, grad_sink, {}, nullptr, true, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var make(M value, std::vector<int> parents, BackFn back) {
    bool needs = false;
    for (int p : parents) needs = needs || nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, std::move(parents),
                          needs ? std::move(back) : nullptr, needs, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const M& val(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ext_value ? *n.ext_value : n.value;
  }

  bool needsGrad(Var v) const { return nodes_[v.id].needs_grad; }
  bool hasGrad(Var v) const { return nodes_[v.id].grad_alloc; }

  // Gradient accumulator for v, zero-initialized on first touch.
  M& gradFor(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad_alloc) {
      const M& value = n.ext_value ? *n.ext_value : n.value;
      n.grad = M::Zero(value.rows(), value.cols());
      n.grad_alloc = true;
    }
    return n.grad;
  }

  void backward(Var loss) {
    gradFor(loss).setConstant(T(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.grad_alloc) {
        if (n.back) n.back(*this, i);
        if (n.ext_grad) *n.ext_grad += n.grad;
      }
      n.grad.resize(0, 0);
      n.grad_alloc = false;
      n.value.resize(0, 0);  // consumers were already processed
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    M value;
    M grad;
    const M* ext_value;
    M* ext_grad;
    std::vector<int> parents;
    BackFn back;
    bool needs_grad;
    bool grad_alloc;
  };

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  return t.make(t.val(a) + t.val(b), {a.id, b.id}, [a, b](Tape<T>& t, int self) {
    const auto& g = t.gradFor(Var{self});
    if (t.needsGrad(a)) t.gradFor(a) += g;
    if (t.needsGrad(b)) t.gradFor(b) += g;
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T c) {
  return t.make(t.val(a) * c, {a.id}, [a, c](Tape<T>& t, int self) {
    if (t.needsGrad(a)) t.gradFor(a) += t.gradFor(Var{self}) * c;
  });
}

template <typename T>
Var hadamard(Tape<T>& t, Var a, Var b) {
  return t.make(t.val(a).cwiseProduct(t.val(b)), {a.id, b.id}, [a, b](Tape<T>& t, int self) {
    const auto& g = t.gradFor(Var{self});
    if (t.needsGrad(a)) t.gradFor(a) += g.cwiseProduct(t.val(b));
    if (t.needsGrad(b)) t.gradFor(b) += g.cwiseProduct(t.val(a));
  });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  Mat<T> y = ((-t.val(x).array()).exp() + T(1)).inverse();
  return t.make(std::move(y), {x.id}, [x](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    const auto& y = t.val(Var{self}).array();
    t.gradFor(x).array() += t.gradFor(Var{self}).array() * y * (T(1) - y);
  });
}

template <typename T>
Var tanhAct(Tape<T>& t, Var x) {
  Mat<T> y = t.val(x).array().tanh();
  return t.make(std::move(y), {x.id}, [x](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    const auto& y = t.val(Var{self}).array();
    t.gradFor(x).array() += t.gradFor(Var{self}).array() * (T(1) - y * y);
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Mat<T> y = t.val(x).cwiseMax(T(0));
  return t.make(std::move(y), {x.id}, [x](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    const auto& y = t.val(Var{self}).array();
    t.gradFor(x).array() += t.gradFor(Var{self}).array() * (y > T(0)).template cast<T>();
  });
}

template <typename T>
Var expAct(Tape<T>& t, Var x) {
  Mat<T> y = t.val(x).array().exp();
  return t.make(std::move(y), {x.id}, [x](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    t.gradFor(x).array() += t.gradFor(Var{self}).array() * t.val(Var{self}).array();
  });
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  return t.make(t.val(a) * t.val(b), {a.id, b.id}, [a, b](Tape<T>& t, int self) {
    const auto& g = t.gradFor(Var{self});
    if (t.needsGrad(a)) t.gradFor(a).noalias() += g * t.val(b).transpose();
    if (t.needsGrad(b)) t.gradFor(b).noalias() += t.val(a).transpose() * g;
  });
}

// y = x * w^T + b, with x: (B x in), w: (out x in), b: (1 x out).
template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  Mat<T> y = t.val(x) * t.val(w).transpose();
  y.rowwise() += t.val(b).row(0);
  return t.make(std::move(y), {x.id, w.id, b.id}, [x, w, b](Tape<T>& t, int self) {
    const auto& g = t.gradFor(Var{self});
    if (t.needsGrad(x)) t.gradFor(x).noalias() += g * t.val(w);
    if (t.needsGrad(w)) t.gradFor(w).noalias() += g.transpose() * t.val(x);
    if (t.needsGrad(b)) t.gradFor(b).row(0) += g.colwise().sum();
  });
}

template <typename T>
Var concatCols(Tape<T>& t, Var a, Var b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  Mat<T> y(va.rows(), va.cols() + vb.cols());
  y << va, vb;
  const int ca = va.cols();
  return t.make(std::move(y), {a.id, b.id}, [a, b, ca](Tape<T>& t, int self) {
    const auto& g = t.gradFor(Var{self});
    if (t.needsGrad(a)) t.gradFor(a) += g.leftCols(ca);
    if (t.needsGrad(b)) t.gradFor(b) += g.rightCols(g.cols() - ca);
  });
}

template <typename T>
Var concatRows(Tape<T>& t, const std::vector<Var>& parts) {
  assert(!parts.empty());
  Eigen::Index rows = 0;
  for (Var p : parts) rows += t.val(p).rows();
  Mat<T> y(rows, t.val(parts[0]).cols());
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (Var p : parts) {
    offsets.push_back(r);
    y.middleRows(r, t.val(p).rows()) = t.val(p);
    r += t.val(p).rows();
    ids.push_back(p.id);
  }
  auto parts_copy = parts;
  return t.make(std::move(y), ids,
                [parts_copy, offsets](Tape<T>& t, int self) {
                  const auto& g = t.gradFor(Var{self});
                  for (size_t i = 0; i < parts_copy.size(); ++i) {
                    if (!t.needsGrad(parts_copy[i])) continue;
                    auto& pg = t.gradFor(parts_copy[i]);
                    pg += g.middleRows(offsets[i], pg.rows());
                  }
                });
}

template <typename T>
Var sliceRows(Tape<T>& t, Var x, int r0, int n) {
  return t.make(t.val(x).middleRows(r0, n), {x.id}, [x, r0, n](Tape<T>& t, int self) {
    if (t.needsGrad(x)) t.gradFor(x).middleRows(r0, n) += t.gradFor(Var{self});
  });
}

// y.row(i) = x.row(rows[i]); duplicate indices accumulate in backward
// (embedding lookup with scatter-add).
template <typename T>
Var gatherRows(Tape<T>& t, Var x, std::vector<int> rows) {
  const auto& vx = t.val(x);
  Mat<T> y(static_cast<Eigen::Index>(rows.size()), vx.cols());
  for (size_t i = 0; i < rows.size(); ++i) y.row(i) = vx.row(rows[i]);
  return t.make(std::move(y), {x.id}, [x, rows = std::move(rows)](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    const auto& g = t.gradFor(Var{self});
    auto& gx = t.gradFor(x);
    for (size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += g.row(i);
  });
}

template <typename T>
Var gatherCols(Tape<T>& t, Var x, std::vector<int> cols) {
  const auto& vx = t.val(x);
  Mat<T> y(vx.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) y.col(i) = vx.col(cols[i]);
  return t.make(std::move(y), {x.id}, [x, cols = std::move(cols)](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    const auto& g = t.gradFor(Var{self});
    auto& gx = t.gradFor(x);
    for (size_t i = 0; i < cols.size(); ++i) gx.col(cols[i]) += g.col(i);
  });
}

// Weighted sum of same-shape vars (used to combine loss terms).
template <typename T>
Var addWeighted(Tape<T>& t, const std::vector<Var>& vars, const std::vector<T>& weights) {
  assert(vars.size() == weights.size() && !vars.empty());
  Mat<T> y = t.val(vars[0]) * weights[0];
  std::vector<int> ids{vars[0].id};
  for (size_t i = 1; i < vars.size(); ++i) {
    y += t.val(vars[i]) * weights[i];
    ids.push_back(vars[i].id);
  }
  auto vars_copy = vars;
  auto w_copy = weights;
  return t.make(std::move(y), ids, [vars_copy, w_copy](Tape<T>& t, int self) {
    const auto& g = t.gradFor(Var{self});
    for (size_t i = 0; i < vars_copy.size(); ++i)
      if (t.needsGrad(vars_copy[i])) t.gradFor(vars_copy[i]) += g * w_copy[i];
  });
}

// ---------------------------------------------------------------------------
// Losses (all return a 1x1 node)
// ---------------------------------------------------------------------------

// scale * sum_i mask_i * CE(logits.row(i), labels[i]). Rows with label < 0
// are ignored regardless of mask. Pass an empty mask for all-ones.
template <typename T>
Var softmaxCrossEntropy(Tape<T>& t, Var logits, std::vector<int> labels, std::vector<T> mask,
                        T scale) {
  const auto& x = t.val(logits);
  const Eigen::Index rows = x.rows();
  auto probs = std::make_shared<Mat<T>>(rows, x.cols());
  T loss = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    T m = x.row(i).maxCoeff();
    Eigen::Array<T, 1, Eigen::Dynamic> e = (x.row(i).array() - m).exp();
    T z = e.sum();
    probs->row(i) = e / z;
    if (labels[i] >= 0) {
      T w = mask.empty() ? T(1) : mask[i];
      loss += w * (std::log(z) + m - x(i, labels[i]));
    }
  }
  Mat<T> out(1, 1);
  out(0, 0) = loss * scale;
  return t.make(std::move(out), {logits.id},
                [logits, labels = std::move(labels), mask = std::move(mask), probs,
                 scale](Tape<T>& t, int self) {
                  if (!t.needsGrad(logits)) return;
                  const T g = t.gradFor(Var{self})(0, 0) * scale;
                  auto& gx = t.gradFor(logits);
                  for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                    if (labels[i] < 0) continue;
                    T w = mask.empty() ? T(1) : mask[i];
                    if (w == T(0)) continue;
                    gx.row(i) += g * w * probs->row(i);
                    gx(i, labels[i]) -= g * w;
                  }
                });
}

// scale * sum_ij row_mask_i * [max(x,0) - x*t + log(1 + exp(-|x|))].
template <typename T>
Var bceWithLogits(Tape<T>& t, Var logits, Mat<T> targets, std::vector<T> row_mask, T scale) {
  const auto& x = t.val(logits);
  T loss = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    T w = row_mask.empty() ? T(1) : row_mask[i];
    if (w == T(0)) continue;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      T v = x(i, j);
      loss += w * (std::max(v, T(0)) - v * targets(i, j) + std::log1p(std::exp(-std::abs(v))));
    }
  }
  Mat<T> out(1, 1);
  out(0, 0) = loss * scale;
  return t.make(std::move(out), {logits.id},
                [logits, targets = std::move(targets), row_mask = std::move(row_mask),
                 scale](Tape<T>& t, int self) {
                  if (!t.needsGrad(logits)) return;
                  const T g = t.gradFor(Var{self})(0, 0) * scale;
                  const auto& x = t.val(logits);
                  auto& gx = t.gradFor(logits);
                  for (Eigen::Index i = 0; i < x.rows(); ++i) {
                    T w = row_mask.empty() ? T(1) : row_mask[i];
                    if (w == T(0)) continue;
                    for (Eigen::Index j = 0; j < x.cols(); ++j) {
                      T s = T(1) / (T(1) + std::exp(-x(i, j)));
                      gx(i, j) += g * w * (s - targets(i, j));
                    }
                  }
                });
}

// scale * sum_bd 0.5 * (mu^2 + exp(lv) - 1 - lv): KL(N(mu, exp(lv)) || N(0, I)).
template <typename T>
Var klStdNormal(Tape<T>& t, Var mu, Var logvar, T scale) {
  const auto& m = t.val(mu).array();
  const auto& lv = t.val(logvar).array();
  Mat<T> out(1, 1);
  out(0, 0) = scale * T(0.5) * (m.square() + lv.exp() - T(1) - lv).sum();
  return t.make(std::move(out), {mu.id, logvar.id}, [mu, logvar, scale](Tape<T>& t, int self) {
    const T g = t.gradFor(Var{self})(0, 0) * scale;
    if (t.needsGrad(mu)) t.gradFor(mu).array() += g * t.val(mu).array();
    if (t.needsGrad(logvar))
      t.gradFor(logvar).array() += g * T(0.5) * (t.val(logvar).array().exp() - T(1));
  });
}

// scale * sum (pred - target)^2.
template <typename T>
Var squaredError(Tape<T>& t, Var pred, Mat<T> target, T scale) {
  Mat<T> out(1, 1);
  out(0, 0) = scale * (t.val(pred) - target).squaredNorm();
  return t.make(std::move(out), {pred.id},
                [pred, target = std::move(target), scale](Tape<T>& t, int self) {
                  if (!t.needsGrad(pred)) return;
                  const T g = t.gradFor(Var{self})(0, 0) * scale;
                  t.gradFor(pred) += T(2) * g * (t.val(pred) - target);
                });
}

}  // namespace chordtex::nn
