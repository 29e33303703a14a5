#pragma once

#include "chordtex/nn/tape.hpp"

#include <memory>

namespace chordtex::nn {

// Valid (unpadded) 2-D convolution geometry with one input channel.
struct Conv2dGeom {
  int in_h = 0, in_w = 0;
  int k_h = 0, k_w = 0;
  int s_h = 1, s_w = 1;
  int out_ch = 0;

  int outH() const { return (in_h - k_h) / s_h + 1; }
  int outW() const { return (in_w - k_w) / s_w + 1; }
  int cells() const { return outH() * outW(); }
  int patch() const { return k_h * k_w; }
};

// Patch index table: entry (k, cell) is the flat input index read by patch
// position k of output cell (i * outW + j). Input rows are flattened h-major
// (index = h * in_w + w), and so are output features ((c * outH + i) * outW + j).
inline std::vector<int> convIndexTable(const Conv2dGeom& g) {
  std::vector<int> idx(static_cast<size_t>(g.patch()) * g.cells());
  int cell = 0;
  for (int i = 0; i < g.outH(); ++i) {
    for (int j = 0; j < g.outW(); ++j, ++cell) {
      for (int kh = 0; kh < g.k_h; ++kh)
        for (int kw = 0; kw < g.k_w; ++kw)
          idx[static_cast<size_t>(kh * g.k_w + kw) * g.cells() + cell] =
              (i * g.s_h + kh) * g.in_w + (j * g.s_w + kw);
    }
  }
  return idx;
}

// x: (B x in_h*in_w), w: (out_ch x k_h*k_w), b: (1 x out_ch).
// Output: (B x out_ch*outH*outW).
template <typename T>
Var conv2dValid(Tape<T>& t, Var x, Var w, Var b, const Conv2dGeom& g) {
  auto idx = std::make_shared<std::vector<int>>(convIndexTable(g));
  const auto& vx = t.val(x);
  const auto& vw = t.val(w);
  const Eigen::Index B = vx.rows();
  const int cells = g.cells(), patch = g.patch();

  Mat<T> col(patch, cells);
  Mat<T> out(B, static_cast<Eigen::Index>(g.out_ch) * cells);
  for (Eigen::Index r = 0; r < B; ++r) {
    for (int k = 0; k < patch; ++k)
      for (int c = 0; c < cells; ++c) col(k, c) = vx(r, (*idx)[static_cast<size_t>(k) * cells + c]);
    Mat<T> y = vw * col;  // (out_ch x cells)
    y.colwise() += t.val(b).transpose().col(0);
    for (int ch = 0; ch < g.out_ch; ++ch)
      out.row(r).segment(static_cast<Eigen::Index>(ch) * cells, cells) = y.row(ch);
  }

  return t.make(std::move(out), {x.id, w.id, b.id}, [x, w, b, g, idx](Tape<T>& t, int self) {
    const auto& gout = t.gradFor(Var{self});
    const auto& vx = t.val(x);
    const auto& vw = t.val(w);
    const int cells = g.cells(), patch = g.patch();
    Mat<T> dw = Mat<T>::Zero(vw.rows(), vw.cols());
    Mat<T> db = Mat<T>::Zero(1, g.out_ch);
    Mat<T> col(patch, cells);
    Mat<T> dy(g.out_ch, cells);
    const bool need_x = t.needsGrad(x);
    for (Eigen::Index r = 0; r < vx.rows(); ++r) {
      for (int ch = 0; ch < g.out_ch; ++ch)
        dy.row(ch) = gout.row(r).segment(static_cast<Eigen::Index>(ch) * cells, cells);
      for (int k = 0; k < patch; ++k)
        for (int c = 0; c < cells; ++c)
          col(k, c) = vx(r, (*idx)[static_cast<size_t>(k) * cells + c]);
      dw.noalias() += dy * col.transpose();
      db.row(0) += dy.rowwise().sum().transpose();
      if (need_x) {
        Mat<T> dcol = vw.transpose() * dy;  // (patch x cells)
        auto& gx = t.gradFor(x);
        for (int k = 0; k < patch; ++k)
          for (int c = 0; c < cells; ++c)
            gx(r, (*idx)[static_cast<size_t>(k) * cells + c]) += dcol(k, c);
      }
    }
    if (t.needsGrad(w)) t.gradFor(w) += dw;
    if (t.needsGrad(b)) t.gradFor(b) += db;
  });
}

// Max-pool along the h axis of a (ch, h, w) feature block flattened as
// (c * h + i) * w + j. Pool window (pool_h x 1), stride (stride_h x 1);
// trailing rows that do not fill a window are dropped.
template <typename T>
Var maxPoolH(Tape<T>& t, Var x, int channels, int h, int w, int pool_h, int stride_h) {
  const auto& vx = t.val(x);
  const Eigen::Index B = vx.rows();
  const int out_h = (h - pool_h) / stride_h + 1;
  Mat<T> out(B, static_cast<Eigen::Index>(channels) * out_h * w);
  auto argmax = std::make_shared<Eigen::MatrixXi>(B, out.cols());
  for (Eigen::Index r = 0; r < B; ++r) {
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < w; ++j) {
          int best_idx = (c * h + i * stride_h) * w + j;
          T best = vx(r, best_idx);
          for (int m = 1; m < pool_h; ++m) {
            int cand = (c * h + i * stride_h + m) * w + j;
            if (vx(r, cand) > best) {
              best = vx(r, cand);
              best_idx = cand;
            }
          }
          Eigen::Index o = (static_cast<Eigen::Index>(c) * out_h + i) * w + j;
          out(r, o) = best;
          (*argmax)(r, o) = best_idx;
        }
      }
    }
  }
  return t.make(std::move(out), {x.id}, [x, argmax](Tape<T>& t, int self) {
    if (!t.needsGrad(x)) return;
    const auto& g = t.gradFor(Var{self});
    auto& gx = t.gradFor(x);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index o = 0; o < g.cols(); ++o) gx(r, (*argmax)(r, o)) += g(r, o);
  });
}

}  // namespace chordtex::nn
