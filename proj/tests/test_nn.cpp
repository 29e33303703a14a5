// Finite-difference validation of every tape op, in double precision.

#include "chordtex/nn/attention.hpp"
#include "chordtex/nn/conv.hpp"
#include "chordtex/nn/params.hpp"
#include "chordtex/nn/rnn.hpp"
#include "chordtex/nn/tape.hpp"

#include <gtest/gtest.h>

#include <functional>

namespace chordtex::nn {
namespace {

using Store = ParamStore<double>;
using GraphFn = std::function<Var(Tape<double>&, Store&)>;

double lossValue(Store& store, const GraphFn& makeLoss) {
  Tape<double> t;
  Var loss = makeLoss(t, store);
  return t.val(loss)(0, 0);
}

// Central-difference check of d(loss)/d(param) for every parameter scalar.
void checkGrads(Store& store, const GraphFn& makeLoss, double h = 1e-5, double tol = 1e-5) {
  store.zeroGrad();
  {
    Tape<double> t;
    Var loss = makeLoss(t, store);
    t.backward(loss);
  }
  std::vector<Mat<double>> analytic;
  for (size_t i = 0; i < store.count(); ++i) analytic.push_back(store.entry(i).grad);

  for (size_t i = 0; i < store.count(); ++i) {
    auto& value = store.entry(i).value;
    for (Eigen::Index r = 0; r < value.rows(); ++r) {
      for (Eigen::Index c = 0; c < value.cols(); ++c) {
        double saved = value(r, c);
        value(r, c) = saved + h;
        double up = lossValue(store, makeLoss);
        value(r, c) = saved - h;
        double down = lossValue(store, makeLoss);
        value(r, c) = saved;
        double numeric = (up - down) / (2 * h);
        double a = analytic[i](r, c);
        double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
        EXPECT_LT(rel, tol) << store.entry(i).name << "(" << r << "," << c << "): analytic " << a
                            << " vs numeric " << numeric;
      }
    }
  }
}

Mat<double> randomMat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat<double> m(r, c);
  rng.fillUniform(m, -scale, scale);
  return m;
}

Var sumSquares(Tape<double>& t, Var y) {
  Mat<double> zero = Mat<double>::Zero(t.val(y).rows(), t.val(y).cols());
  return squaredError(t, y, std::move(zero), 1.0);
}

TEST(TapeGrad, ElementwiseChain) {
  Rng rng(7);
  Store store;
  auto a = store.add("a", 4, 5, 0.8, rng);
  auto b = store.add("b", 4, 5, 0.8, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var va = s.node(t, a), vb = s.node(t, b);
    Var x = add(t, hadamard(t, sigmoid(t, va), tanhAct(t, vb)), scale(t, va, 0.3));
    Var y = add(t, relu(t, x), expAct(t, scale(t, vb, 0.2)));
    return sumSquares(t, y);
  });
}

TEST(TapeGrad, MatmulLinear) {
  Rng rng(11);
  Store store;
  auto a = store.add("a", 3, 4, 0.7, rng);
  auto b = store.add("b", 4, 5, 0.7, rng);
  auto w = store.add("w", 6, 5, 0.7, rng);
  auto bias = store.add("bias", 1, 6, 0.7, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var y = linear(t, matmul(t, s.node(t, a), s.node(t, b)), s.node(t, w), s.node(t, bias));
    return sumSquares(t, y);
  });
}

TEST(TapeGrad, ConcatSliceGather) {
  Rng rng(13);
  Store store;
  auto a = store.add("a", 5, 3, 0.9, rng);
  auto b = store.add("b", 5, 2, 0.9, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var cat = concatCols(t, s.node(t, a), s.node(t, b));
    Var stack = concatRows(t, {cat, cat});
    Var sl = sliceRows(t, stack, 2, 6);
    Var gr = gatherRows(t, sl, {0, 0, 3, 5, 1});
    Var gc = gatherCols(t, gr, {4, 1, 1, 0});
    return sumSquares(t, gc);
  });
}

TEST(TapeGrad, AddWeighted) {
  Rng rng(17);
  Store store;
  auto a = store.add("a", 2, 2, 1.0, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var va = s.node(t, a);
    Var l1 = sumSquares(t, va);
    Var l2 = sumSquares(t, sigmoid(t, va));
    return addWeighted(t, {l1, l2}, {0.7, 1.3});
  });
}

TEST(TapeGrad, SoftmaxCrossEntropyMasked) {
  Rng rng(19);
  Store store;
  auto a = store.add("logits", 6, 5, 1.5, rng);
  std::vector<int> labels = {0, 3, -1, 4, 2, 1};
  std::vector<double> mask = {1, 0.5, 1, 1, 0, 2};
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    return softmaxCrossEntropy(t, s.node(t, a), labels, mask, 0.25);
  });
}

TEST(TapeGrad, BceWithLogits) {
  Rng rng(23);
  Store store;
  auto a = store.add("logits", 5, 4, 1.5, rng);
  Mat<double> targets(5, 4);
  Rng trng(24);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) targets(i, j) = trng.coin() ? 1.0 : 0.0;
  std::vector<double> mask = {1, 1, 0, 0.5, 1};
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    return bceWithLogits(t, s.node(t, a), targets, mask, 0.5);
  });
}

TEST(TapeGrad, KlStdNormal) {
  Rng rng(29);
  Store store;
  auto mu = store.add("mu", 3, 6, 1.0, rng);
  auto lv = store.add("lv", 3, 6, 1.0, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    return klStdNormal(t, s.node(t, mu), s.node(t, lv), 0.4);
  });
}

TEST(TapeGrad, GruSequenceBothDirections) {
  Rng rng(31);
  Store store;
  const int B = 3, in = 4, H = 5, S = 4;
  auto x0 = store.add("x0", B, in, 0.8, rng);
  auto x1 = store.add("x1", B, in, 0.8, rng);
  auto x2 = store.add("x2", B, in, 0.8, rng);
  auto x3 = store.add("x3", B, in, 0.8, rng);
  auto h0 = store.add("h0", B, H, 0.8, rng);
  auto wx = store.add("wx", 3 * H, in, 0.6, rng);
  auto wh = store.add("wh", 3 * H, H, 0.6, rng);
  auto b = store.add("b", 1, 3 * H, 0.6, rng);
  for (bool reverse : {false, true}) {
    checkGrads(store, [&](Tape<double>& t, Store& s) {
      std::vector<Var> steps = {s.node(t, x0), s.node(t, x1), s.node(t, x2), s.node(t, x3)};
      Var stack = gruSequence(t, steps, s.node(t, h0), s.node(t, wx), s.node(t, wh), s.node(t, b),
                              reverse);
      (void)S;
      return sumSquares(t, stack);
    });
  }
}

TEST(TapeGrad, GruRepeatedStepInput) {
  // The same Var feeding every step (as the decoders do) must accumulate.
  Rng rng(37);
  Store store;
  const int B = 2, in = 3, H = 4;
  auto x = store.add("x", B, in, 0.8, rng);
  auto wx = store.add("wx", 3 * H, in, 0.6, rng);
  auto wh = store.add("wh", 3 * H, H, 0.6, rng);
  auto b = store.add("b", 1, 3 * H, 0.6, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var vx = s.node(t, x);
    Var h0 = t.input(Mat<double>::Zero(B, H));
    std::vector<Var> steps(5, vx);
    return sumSquares(t, gruSequence(t, steps, h0, s.node(t, wx), s.node(t, wh), s.node(t, b),
                                     false));
  });
}

TEST(TapeGrad, ConvAndMaxPool) {
  Rng rng(41);
  Store store;
  Conv2dGeom g{10, 8, 3, 2, 1, 2, 4};  // outH 8, outW 4
  auto x = store.add("x", 3, g.in_h * g.in_w, 0.9, rng);
  auto w = store.add("w", g.out_ch, g.patch(), 0.9, rng);
  auto b = store.add("b", 1, g.out_ch, 0.9, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var conv = conv2dValid(t, s.node(t, x), s.node(t, w), s.node(t, b), g);
    Var act = relu(t, conv);
    Var pool = maxPoolH(t, act, g.out_ch, g.outH(), g.outW(), 4, 4);
    return sumSquares(t, pool);
  });
}

TEST(TapeGrad, LayerNorm) {
  Rng rng(43);
  Store store;
  auto x = store.add("x", 4, 6, 1.2, rng);
  auto gain = store.add("gain", 1, 6, 0.9, rng);
  auto bias = store.add("bias", 1, 6, 0.9, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    return sumSquares(t, layerNorm(t, s.node(t, x), s.node(t, gain), s.node(t, bias)));
  });
}

TEST(TapeGrad, MultiHeadAttention) {
  Rng rng(47);
  Store store;
  const int batch = 2, q_len = 3, k_len = 4, heads = 2, d = 6;
  auto q = store.add("q", batch * q_len, d, 0.8, rng);
  auto k = store.add("k", batch * k_len, d, 0.8, rng);
  auto v = store.add("v", batch * k_len, d, 0.8, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var o = multiHeadAttention(t, s.node(t, q), s.node(t, k), s.node(t, v), batch, q_len, k_len,
                               heads, false);
    return sumSquares(t, o);
  });
}

TEST(TapeGrad, MultiHeadAttentionCausal) {
  Rng rng(53);
  Store store;
  const int batch = 2, len = 4, heads = 3, d = 6;
  auto q = store.add("q", batch * len, d, 0.8, rng);
  auto k = store.add("k", batch * len, d, 0.8, rng);
  auto v = store.add("v", batch * len, d, 0.8, rng);
  checkGrads(store, [&](Tape<double>& t, Store& s) {
    Var o = multiHeadAttention(t, s.node(t, q), s.node(t, k), s.node(t, v), batch, len, len, heads,
                               true);
    return sumSquares(t, o);
  });
}

TEST(Attention, CausalMaskBlocksFuture) {
  Rng rng(59);
  const int batch = 1, len = 5, heads = 2, d = 8;
  Mat<double> q = randomMat(rng, len, d), k = randomMat(rng, len, d), v = randomMat(rng, len, d);
  Tape<double> t;
  Var o = multiHeadAttention(t, t.input(q), t.input(k), t.input(v), batch, len, len, heads, true);
  Mat<double> base = t.val(o);

  Mat<double> k2 = k, v2 = v;
  k2.row(4).setConstant(9.0);
  v2.row(4).setConstant(-9.0);
  Tape<double> t2;
  Var o2 = multiHeadAttention(t2, t2.input(q), t2.input(k2), t2.input(v2), batch, len, len, heads,
                              true);
  for (int i = 0; i < 4; ++i)
    EXPECT_TRUE(t2.val(o2).row(i).isApprox(base.row(i), 1e-12)) << "row " << i;
  EXPECT_FALSE(t2.val(o2).row(4).isApprox(base.row(4), 1e-6));
}

TEST(Adam, ConvergesOnQuadratic) {
  Rng rng(61);
  Store store;
  auto x = store.add("x", 1, 8, 2.0, rng);
  Mat<double> target = randomMat(rng, 1, 8);
  for (int step = 0; step < 3000; ++step) {
    store.zeroGrad();
    Tape<double> t;
    Var loss = squaredError(t, store.node(t, x), target, 1.0);
    t.backward(loss);
    store.adamStep(1e-2);
  }
  EXPECT_LT((store.value(x) - target).norm(), 1e-4);
}

TEST(Adam, GradClipRescalesToMaxNorm) {
  Rng rng(67);
  Store store;
  auto x = store.add("x", 2, 2, 1.0, rng);
  store.grad(x) << 3, 0, 0, 4;  // norm 5
  double before = store.clipGradNorm(1.0);
  EXPECT_NEAR(before, 5.0, 1e-12);
  EXPECT_NEAR(store.grad(x).norm(), 1.0, 1e-12);
}

}  // namespace
}  // namespace chordtex::nn
