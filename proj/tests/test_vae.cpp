#include "chordtex/vae.hpp"

#include "support/gradcheck.hpp"
#include "support/test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace chordtex {
namespace {

Segment busySegment(uint64_t seed) {
  Rng rng(seed);
  std::vector<NoteEvent> notes;
  for (int b = 0; b < kBeatsPerSegment; ++b) {
    notes.push_back(NoteEvent{b * 4, 48 + static_cast<int>(rng.below(12)), 4});
    notes.push_back(NoteEvent{b * 4, 60 + static_cast<int>(rng.below(12)), 2});
    notes.push_back(NoteEvent{b * 4 + 2, 64 + static_cast<int>(rng.below(12)), 2});
  }
  return makeSegment(std::move(notes), "busy" + std::to_string(seed), 0);
}

TEST(VaeShapes, ConvPoolAndLatentGeometry) {
  VaeDims dims = VaeDims::full();
  auto geom = dims.convGeom();
  EXPECT_EQ(geom.outH(), 117);
  EXPECT_EQ(geom.outW(), 8);
  EXPECT_EQ(dims.poolH(), 29);
  EXPECT_EQ(dims.textureStepFeatures(), 290);

  VaeModel<float> model(dims, 1);
  std::vector<Segment> segs = {busySegment(1), busySegment(2)};
  auto batch = makeVaeBatch<float>(segs);
  nn::Tape<float> t;
  VaeModel<float>::TextureTrace trace;
  auto post = model.encodeTexture(t, batch.roll, &trace);
  EXPECT_EQ(t.val(trace.conv_out).cols(), 10 * 117 * 8);
  EXPECT_EQ(t.val(trace.pool_out).cols(), 10 * 29 * 8);
  EXPECT_EQ(t.val(post.mu).cols(), 256);
  EXPECT_EQ(t.val(post.logvar).cols(), 256);

  auto chd = model.encodeChord(t, batch.chord_steps);
  EXPECT_EQ(t.val(chd.mu).cols(), 256);
}

TEST(VaeShapes, PianoTreeFrameCountIs32) {
  VaeModel<float> model(VaeDims::tiny(), 2);
  nn::Mat<float> z = nn::Mat<float>::Zero(1, 2 * model.dims().latent);
  PianoTree tree = model.greedyDecode(z);
  EXPECT_EQ(static_cast<int>(tree.frames.size()), 32);
}

TEST(VaeLoss, UniformLogitsGiveAnalyticChordLoss) {
  VaeModel<double> model(VaeDims::tiny(), 3);
  for (const char* name : {"chd_dec.root.w", "chd_dec.root.b", "chd_dec.bass.w", "chd_dec.bass.b",
                           "chd_dec.chroma.w", "chd_dec.chroma.b"}) {
    model.params().value(model.params().find(name)).setZero();
  }
  std::vector<Segment> segs = {busySegment(7)};
  auto batch = makeVaeBatch<double>(segs);
  nn::Tape<double> t;
  auto g = model.buildLossGraph(t, batch, nullptr, nullptr, 0.0);
  const double per_beat = 2.0 * std::log(12.0) + 12.0 * std::log(2.0);
  EXPECT_NEAR(t.val(g.loss_chord)(0, 0), 8.0 * per_beat, 1e-6);
}

TEST(VaeLoss, KlClosedFormValues) {
  VaeModel<double> model(VaeDims::full(), 4);
  // Zero encoder heads give an exact standard-normal posterior -> KL = 0;
  // a unit-mean, unit-variance posterior gives 0.5 per dimension.
  for (const char* name : {"chd_enc.mu.w", "chd_enc.mu.b", "chd_enc.logvar.w",
                           "chd_enc.logvar.b"}) {
    model.params().value(model.params().find(name)).setZero();
  }
  std::vector<Segment> segs = {busySegment(9)};
  auto batch = makeVaeBatch<double>(segs);
  {
    nn::Tape<double> t;
    auto post = model.encodeChord(t, batch.chord_steps);
    nn::Var kl = nn::klStdNormal(t, post.mu, post.logvar, 1.0);
    EXPECT_NEAR(t.val(kl)(0, 0), 0.0, 1e-9);
  }
  model.params().value(model.params().find("chd_enc.mu.b")).setOnes();
  {
    nn::Tape<double> t;
    auto post = model.encodeChord(t, batch.chord_steps);
    nn::Var kl = nn::klStdNormal(t, post.mu, post.logvar, 1.0);
    EXPECT_NEAR(t.val(kl)(0, 0), 0.5 * 256, 1e-6);  // 128 over 256 dims
  }
}

TEST(VaeLoss, KlTermsNonNegativeOnRandomModel) {
  VaeModel<double> model(VaeDims::tiny(), 5);
  auto batch = makeVaeBatch<double>(testing::randomSegments(55, 4));
  nn::Tape<double> t;
  auto g = model.buildLossGraph(t, batch, nullptr, nullptr, 0.1);
  EXPECT_GE(t.val(g.kl_chd)(0, 0), 0.0);
  EXPECT_GE(t.val(g.kl_txt)(0, 0), 0.0);
  EXPECT_TRUE(std::isfinite(t.val(g.total)(0, 0)));
}

TEST(VaeEval, EncodeIsDeterministicBitwise) {
  VaeModel<float> model(VaeDims::full(), 6);
  auto segs = testing::randomSegments(66, 5);
  auto a = encodeSegments(model, segs);
  auto b = encodeSegments(model, segs);
  EXPECT_TRUE(a.chd_mu == b.chd_mu);
  EXPECT_TRUE(a.txt_mu == b.txt_mu);
  EXPECT_TRUE(a.chd_logvar == b.chd_logvar);
}

TEST(VaeEval, IdenticalProgressionsGiveIdenticalPosteriors) {
  VaeModel<float> model(VaeDims::full(), 7);
  Segment seg = busySegment(42);
  Segment octave = transpose(seg, 12);
  // Chord extraction is pitch-class based, so the chord posterior of the
  // octave transposition matches exactly.
  auto enc = encodeSegments(model, {seg, octave});
  EXPECT_TRUE(enc.chd_mu.row(0) == enc.chd_mu.row(1));
}

TEST(VaeEval, ReparameterizeMatchesFormulaAndStatistics) {
  const double mu = 0.7, logvar = std::log(2.25);
  Rng rng(77);
  const int n = 10000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    double z = mu + std::exp(0.5 * logvar) * rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double se_mean = std::sqrt(2.25 / n);
  const double se_var = 2.25 * std::sqrt(2.0 / (n - 1));
  EXPECT_NEAR(mean, mu, 3 * se_mean);
  EXPECT_NEAR(var, 2.25, 3 * se_var);
}

TEST(VaeDecode, GreedyDecodeSatisfiesStructuralInvariants) {
  VaeModel<float> model(VaeDims::tiny(), 8);
  Rng rng(88);
  for (int trial = 0; trial < 5; ++trial) {
    nn::Mat<float> z(1, 2 * model.dims().latent);
    rng.fillNormal(z);
    PianoTree tree = model.greedyDecode(z * 2.0f);
    for (const auto& frame : tree.frames) {
      EXPECT_LE(frame.size(), static_cast<size_t>(kMaxNotesPerFrame));
      for (size_t i = 0; i < frame.size(); ++i) {
        EXPECT_GE(frame[i].pitch, 0);
        EXPECT_LE(frame[i].pitch, 127);
        EXPECT_GE(frame[i].duration, 1);
        EXPECT_LE(frame[i].duration, 32);
        if (i > 0) EXPECT_GT(frame[i].pitch, frame[i - 1].pitch);
      }
    }
    Segment seg = segmentFromPianoTree(tree);
    for (const auto& n : seg.notes) EXPECT_LE(n.onset + n.duration, 32);
  }
}

TEST(VaeConv, TranslationEquivariancePrePoolAndPooledShift) {
  VaeModel<float> model(VaeDims::full(), 9);
  Segment seg = busySegment(11);
  Segment up = transpose(seg, 12);
  ASSERT_EQ(up.notes.size(), seg.notes.size());

  auto batch_a = makeVaeBatch<float>({seg});
  auto batch_b = makeVaeBatch<float>({up});
  nn::Tape<float> t;
  VaeModel<float>::TextureTrace ta, tb;
  model.encodeTexture(t, batch_a.roll, &ta);
  model.encodeTexture(t, batch_b.roll, &tb);
  const auto& conv_a = t.val(ta.conv_out);
  const auto& conv_b = t.val(tb.conv_out);
  const auto& pool_a = t.val(ta.pool_out);
  const auto& pool_b = t.val(tb.pool_out);

  const int ch = model.dims().conv_channels, H = 117, W = 8, PH = 29;
  for (int c = 0; c < ch; ++c) {
    for (int i = 12; i < H; ++i)
      for (int j = 0; j < W; ++j)
        ASSERT_NEAR(conv_b(0, (c * H + i) * W + j), conv_a(0, (c * H + i - 12) * W + j), 1e-5);
    for (int i = 3; i < PH; ++i)
      for (int j = 0; j < W; ++j)
        ASSERT_NEAR(pool_b(0, (c * PH + i) * W + j), pool_a(0, (c * PH + i - 3) * W + j), 1e-5);
  }
}

TEST(VaeGrad, TinyModelFiniteDifferenceAgreement) {
  VaeModel<double> model(VaeDims::tiny(), 10);
  auto batch = makeVaeBatch<double>({busySegment(21), busySegment(22)});
  Rng rng(99);
  nn::Mat<double> eps_chd(2, model.dims().latent), eps_txt(2, model.dims().latent);
  rng.fillNormal(eps_chd);
  rng.fillNormal(eps_txt);
  auto report = testing::vaeGradCheck(model, batch, eps_chd, eps_txt, 0.05, 1e-5, 4, 1234);
  EXPECT_LT(report.max_rel_err, 1e-4) << report.worst;
  EXPECT_GT(report.checked, 100);
}

TEST(VaeMetrics, PerfectAndChanceBehaviour) {
  VaeModel<double> model(VaeDims::tiny(), 11);
  auto batch = makeVaeBatch<double>({busySegment(31)});
  nn::Tape<double> t;
  auto g = model.buildLossGraph(t, batch, nullptr, nullptr, 0.0);
  auto metrics = reconMetricsFromGraph<double>(t, g, batch);
  EXPECT_GE(metrics.pitch_accuracy, 0.0);
  EXPECT_LE(metrics.pitch_accuracy, 1.0);
  EXPECT_EQ(metrics.beats, 8);
  EXPECT_GT(metrics.note_slots, 0);
}

}  // namespace
}  // namespace chordtex
