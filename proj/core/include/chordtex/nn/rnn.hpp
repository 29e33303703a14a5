#pragma once

#include "chordtex/nn/tape.hpp"

#include <memory>

namespace chordtex::nn {

// GRU gate math shared by the fused tape op and plain inference stepping.
// Slab order in the 3H dimension is [r | z | n]:
//   r = sigmoid(x Wxr^T + br + h Whr^T)
//   z = sigmoid(x Wxz^T + bz + h Whz^T)
//   n = tanh(x Wxn^T + bn + r .* (h Whn^T))
//   h' = (1 - z) .* n + z .* h
template <typename T>
struct GruStepWork {
  Mat<T> r, z, n, ghn;  // ghn = h Whn^T, stored for backward
};

template <typename T>
void gruForwardStep(const Mat<T>& wx, const Mat<T>& wh, const Mat<T>& b, const Mat<T>& x,
                    const Mat<T>& h, GruStepWork<T>& work, Mat<T>& h_next) {
  const Eigen::Index H = h.cols();
  Mat<T> gx = x * wx.transpose();
  gx.rowwise() += b.row(0);
  Mat<T> gh = h * wh.transpose();
  work.r = ((-(gx.leftCols(H) + gh.leftCols(H)).array()).exp() + T(1)).inverse();
  work.z = ((-(gx.middleCols(H, H) + gh.middleCols(H, H)).array()).exp() + T(1)).inverse();
  work.ghn = gh.rightCols(H);
  work.n = (gx.rightCols(H).array() + work.r.array() * work.ghn.array()).tanh();
  h_next = ((T(1) - work.z.array()) * work.n.array() + work.z.array() * h.array()).matrix();
}

// Plain single step for autoregressive inference (no tape).
template <typename T>
void gruStep(const Mat<T>& wx, const Mat<T>& wh, const Mat<T>& b, const Mat<T>& x, Mat<T>& h) {
  GruStepWork<T> work;
  Mat<T> h_next;
  gruForwardStep(wx, wh, b, x, h, work, h_next);
  h = std::move(h_next);
}

// Fused GRU over a step sequence. steps[s] is the (B x in) input of step s
// (original time order); reverse=true processes steps back to front. The
// output is an (S*B x H) stack where block s holds the hidden state after
// the cell has consumed step s, so forward/backward runs stay row-aligned
// and bidirectional final states live at blocks S-1 and 0 respectively.
template <typename T>
Var gruSequence(Tape<T>& t, const std::vector<Var>& steps, Var h0, Var wx, Var wh, Var b,
                bool reverse) {
  const int S = static_cast<int>(steps.size());
  const Eigen::Index B = t.val(h0).rows();
  const Eigen::Index H = t.val(h0).cols();

  struct Ctx {
    std::vector<Mat<T>> h;  // S+1 states in processing order, h[0] = h0
    std::vector<GruStepWork<T>> work;
  };
  auto ctx = std::make_shared<Ctx>();
  ctx->h.resize(S + 1);
  ctx->work.resize(S);
  ctx->h[0] = t.val(h0);

  Mat<T> out(S * B, H);
  for (int k = 0; k < S; ++k) {
    const int s = reverse ? S - 1 - k : k;
    gruForwardStep(t.val(wx), t.val(wh), t.val(b), t.val(steps[s]), ctx->h[k], ctx->work[k],
                   ctx->h[k + 1]);
    out.middleRows(static_cast<Eigen::Index>(s) * B, B) = ctx->h[k + 1];
  }

  std::vector<int> parents;
  for (Var v : steps) parents.push_back(v.id);
  parents.push_back(h0.id);
  parents.push_back(wx.id);
  parents.push_back(wh.id);
  parents.push_back(b.id);

  auto steps_copy = steps;
  return t.make(
      std::move(out), std::move(parents),
      [steps_copy, h0, wx, wh, b, ctx, S, B, H, reverse](Tape<T>& t, int self) {
        using A = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic>;
        const auto& gout = t.gradFor(Var{self});
        const auto& vwx = t.val(wx);
        const auto& vwh = t.val(wh);
        Mat<T> dwx = Mat<T>::Zero(vwx.rows(), vwx.cols());
        Mat<T> dwh = Mat<T>::Zero(vwh.rows(), vwh.cols());
        Mat<T> db = Mat<T>::Zero(1, vwx.rows());
        Mat<T> dh = Mat<T>::Zero(B, H);
        Mat<T> gxd(B, 3 * H), ghd(B, 3 * H);

        for (int k = S - 1; k >= 0; --k) {
          const int s = reverse ? S - 1 - k : k;
          dh += gout.middleRows(static_cast<Eigen::Index>(s) * B, B);
          const GruStepWork<T>& w = ctx->work[k];
          const A& r = w.r.array();
          const A& z = w.z.array();
          const A& n = w.n.array();
          const A dh_a = dh.array();
          A dn = dh_a * (T(1) - z);
          A dz = dh_a * (ctx->h[k].array() - n);
          A dpre_n = dn * (T(1) - n * n);
          A dr = dpre_n * w.ghn.array();
          A dpre_r = dr * r * (T(1) - r);
          A dpre_z = dz * z * (T(1) - z);
          gxd.leftCols(H) = dpre_r.matrix();
          gxd.middleCols(H, H) = dpre_z.matrix();
          gxd.rightCols(H) = dpre_n.matrix();
          ghd.leftCols(H) = dpre_r.matrix();
          ghd.middleCols(H, H) = dpre_z.matrix();
          ghd.rightCols(H) = (dpre_n * r).matrix();

          if (t.needsGrad(steps_copy[s]))
            t.gradFor(steps_copy[s]).noalias() += gxd * vwx;
          dwx.noalias() += gxd.transpose() * t.val(steps_copy[s]);
          db.row(0) += gxd.colwise().sum();
          dwh.noalias() += ghd.transpose() * ctx->h[k];
          dh = (dh_a * z).matrix();
          dh.noalias() += ghd * vwh;
        }
        if (t.needsGrad(h0)) t.gradFor(h0) += dh;
        if (t.needsGrad(wx)) t.gradFor(wx) += dwx;
        if (t.needsGrad(wh)) t.gradFor(wh) += dwh;
        if (t.needsGrad(b)) t.gradFor(b) += db;
      });
}

}  // namespace chordtex::nn
