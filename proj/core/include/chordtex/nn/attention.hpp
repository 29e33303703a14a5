#pragma once

#include "chordtex/nn/tape.hpp"

#include <memory>

namespace chordtex::nn {

// Row-wise layer norm with learned gain/bias (each 1 x C).
template <typename T>
Var layerNorm(Tape<T>& t, Var x, Var gain, Var bias, T eps = T(1e-5)) {
  const auto& vx = t.val(x);
  const Eigen::Index R = vx.rows(), C = vx.cols();
  auto xhat = std::make_shared<Mat<T>>(R, C);
  auto inv_std = std::make_shared<Mat<T>>(R, 1);
  Mat<T> y(R, C);
  for (Eigen::Index i = 0; i < R; ++i) {
    T mean = vx.row(i).mean();
    T var = (vx.row(i).array() - mean).square().mean();
    T is = T(1) / std::sqrt(var + eps);
    (*inv_std)(i, 0) = is;
    xhat->row(i) = ((vx.row(i).array() - mean) * is).matrix();
    y.row(i) = (xhat->row(i).array() * t.val(gain).row(0).array()).matrix() + t.val(bias).row(0);
  }
  return t.make(std::move(y), {x.id, gain.id, bias.id},
                [x, gain, bias, xhat, inv_std](Tape<T>& t, int self) {
                  const auto& g = t.gradFor(Var{self});
                  if (t.needsGrad(gain))
                    t.gradFor(gain).row(0) += g.cwiseProduct(*xhat).colwise().sum();
                  if (t.needsGrad(bias)) t.gradFor(bias).row(0) += g.colwise().sum();
                  if (!t.needsGrad(x)) return;
                  auto& gx = t.gradFor(x);
                  const auto& vg = t.val(gain);
                  const Eigen::Index C = g.cols();
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    Eigen::Array<T, 1, Eigen::Dynamic> dxhat =
                        g.row(i).array() * vg.row(0).array();
                    T m1 = dxhat.mean();
                    T m2 = (dxhat * xhat->row(i).array()).mean();
                    gx.row(i) +=
                        ((dxhat - m1 - xhat->row(i).array() * m2) * (*inv_std)(i, 0)).matrix();
                    (void)C;
                  }
                });
}

// Multi-head scaled dot-product attention over projected inputs.
// q: (B*Sq x d), k/v: (B*Sk x d) with d = heads * head_dim; sequences are
// stacked per batch item (row = b*S + s). causal masks key positions > query
// position (requires Sq == Sk).
template <typename T>
Var multiHeadAttention(Tape<T>& t, Var q, Var k, Var v, int batch, int q_len, int k_len,
                       int heads, bool causal) {
  const auto& vq = t.val(q);
  const auto& vk = t.val(k);
  const auto& vv = t.val(v);
  const int d = static_cast<int>(vq.cols());
  const int hd = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  auto probs = std::make_shared<std::vector<Mat<T>>>();
  probs->reserve(static_cast<size_t>(batch) * heads);
  Mat<T> out = Mat<T>::Zero(vq.rows(), d);
  for (int bi = 0; bi < batch; ++bi) {
    for (int h = 0; h < heads; ++h) {
      auto qb = vq.block(static_cast<Eigen::Index>(bi) * q_len, static_cast<Eigen::Index>(h) * hd,
                         q_len, hd);
      auto kb = vk.block(static_cast<Eigen::Index>(bi) * k_len, static_cast<Eigen::Index>(h) * hd,
                         k_len, hd);
      auto vb = vv.block(static_cast<Eigen::Index>(bi) * k_len, static_cast<Eigen::Index>(h) * hd,
                         k_len, hd);
      Mat<T> scores = qb * kb.transpose() * scale;
      if (causal) {
        for (int i = 0; i < q_len; ++i)
          for (int j = i + 1; j < k_len; ++j) scores(i, j) = T(-1e30);
      }
      Mat<T> p(q_len, k_len);
      for (int i = 0; i < q_len; ++i) {
        T m = scores.row(i).maxCoeff();
        Eigen::Array<T, 1, Eigen::Dynamic> e = (scores.row(i).array() - m).exp();
        p.row(i) = e / e.sum();
      }
      out.block(static_cast<Eigen::Index>(bi) * q_len, static_cast<Eigen::Index>(h) * hd, q_len,
                hd) = p * vb;
      probs->push_back(std::move(p));
    }
  }

  return t.make(std::move(out), {q.id, k.id, v.id},
                [q, k, v, batch, q_len, k_len, heads, hd, scale, probs](Tape<T>& t, int self) {
                  const auto& g = t.gradFor(Var{self});
                  const auto& vq = t.val(q);
                  const auto& vk = t.val(k);
                  const auto& vv = t.val(v);
                  const bool nq = t.needsGrad(q), nk = t.needsGrad(k), nv = t.needsGrad(v);
                  for (int bi = 0; bi < batch; ++bi) {
                    for (int h = 0; h < heads; ++h) {
                      const Mat<T>& p = (*probs)[static_cast<size_t>(bi) * heads + h];
                      auto qb = vq.block(static_cast<Eigen::Index>(bi) * q_len,
                                         static_cast<Eigen::Index>(h) * hd, q_len, hd);
                      auto kb = vk.block(static_cast<Eigen::Index>(bi) * k_len,
                                         static_cast<Eigen::Index>(h) * hd, k_len, hd);
                      auto vb = vv.block(static_cast<Eigen::Index>(bi) * k_len,
                                         static_cast<Eigen::Index>(h) * hd, k_len, hd);
                      auto gb = g.block(static_cast<Eigen::Index>(bi) * q_len,
                                        static_cast<Eigen::Index>(h) * hd, q_len, hd);
                      if (nv)
                        t.gradFor(v).block(static_cast<Eigen::Index>(bi) * k_len,
                                           static_cast<Eigen::Index>(h) * hd, k_len, hd) +=
                            p.transpose() * gb;
                      Mat<T> dp = gb * vb.transpose();  // (q_len x k_len)
                      Mat<T> ds(q_len, k_len);
                      for (int i = 0; i < q_len; ++i) {
                        T dot = dp.row(i).cwiseProduct(p.row(i)).sum();
                        ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
                      }
                      if (nq)
                        t.gradFor(q).block(static_cast<Eigen::Index>(bi) * q_len,
                                           static_cast<Eigen::Index>(h) * hd, q_len, hd) +=
                            ds * kb * scale;
                      if (nk)
                        t.gradFor(k).block(static_cast<Eigen::Index>(bi) * k_len,
                                           static_cast<Eigen::Index>(h) * hd, k_len, hd) +=
                            ds.transpose() * qb * scale;
                    }
                  }
                });
}

}  // namespace chordtex::nn
