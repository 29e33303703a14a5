#pragma once

// Template implementation of VaeModel; included from vae.hpp.

#include <algorithm>
#include <memory>

namespace chordtex {

namespace detail {

template <typename T>
GruHandles<T> addGru(nn::ParamStore<T>& p, const std::string& prefix, int input, int hidden,
                     Rng& rng) {
  GruHandles<T> h;
  h.wx = p.addFanIn(prefix + ".wx", 3 * hidden, input, rng);
  h.wh = p.addFanIn(prefix + ".wh", 3 * hidden, hidden, rng);
  h.b = p.add(prefix + ".b", 1, 3 * hidden, 0.0, rng);
  return h;
}

template <typename T>
LinearHandles<T> addLinear(nn::ParamStore<T>& p, const std::string& prefix, int out, int in,
                           Rng& rng) {
  LinearHandles<T> h;
  h.w = p.addFanIn(prefix + ".w", out, in, rng);
  h.b = p.add(prefix + ".b", 1, out, 0.0, rng);
  return h;
}

template <typename T>
nn::Var applyLinear(nn::Tape<T>& t, nn::ParamStore<T>& p, nn::Var x, const LinearHandles<T>& h) {
  return nn::linear(t, x, p.node(t, h.w), p.node(t, h.b));
}

}  // namespace detail

template <typename T>
VaeModel<T>::VaeModel(VaeDims dims, uint64_t seed) : dims_(dims) {
  Rng rng(deriveSeed(seed, fnv1a("vae-init")));
  auto& p = params_;
  const int L = dims_.latent;

  chd_enc_fwd_ = detail::addGru(p, "chd_enc.fwd", kChordDims, dims_.chord_enc_hidden, rng);
  chd_enc_bwd_ = detail::addGru(p, "chd_enc.bwd", kChordDims, dims_.chord_enc_hidden, rng);
  chd_mu_ = detail::addLinear(p, "chd_enc.mu", L, 2 * dims_.chord_enc_hidden, rng);
  chd_lv_ = detail::addLinear(p, "chd_enc.logvar", L, 2 * dims_.chord_enc_hidden, rng);

  chd_dec_fwd_ = detail::addGru(p, "chd_dec.fwd", L, dims_.chord_dec_hidden, rng);
  chd_dec_bwd_ = detail::addGru(p, "chd_dec.bwd", L, dims_.chord_dec_hidden, rng);
  root_head_ = detail::addLinear(p, "chd_dec.root", 12, 2 * dims_.chord_dec_hidden, rng);
  bass_head_ = detail::addLinear(p, "chd_dec.bass", 12, 2 * dims_.chord_dec_hidden, rng);
  chroma_head_ = detail::addLinear(p, "chd_dec.chroma", 12, 2 * dims_.chord_dec_hidden, rng);

  auto geom = dims_.convGeom();
  conv_w_ = p.addFanIn("txt_enc.conv.w", geom.out_ch, geom.patch(), rng);
  conv_b_ = p.add("txt_enc.conv.b", 1, geom.out_ch, 0.0, rng);
  txt_enc_fwd_ =
      detail::addGru(p, "txt_enc.fwd", dims_.textureStepFeatures(), dims_.texture_hidden, rng);
  txt_enc_bwd_ =
      detail::addGru(p, "txt_enc.bwd", dims_.textureStepFeatures(), dims_.texture_hidden, rng);
  txt_mu_ = detail::addLinear(p, "txt_enc.mu", L, 2 * dims_.texture_hidden, rng);
  txt_lv_ = detail::addLinear(p, "txt_enc.logvar", L, 2 * dims_.texture_hidden, rng);

  frame_init_ = detail::addLinear(p, "pt_dec.frame_init", dims_.frame_hidden, 2 * L, rng);
  frame_gru_ = detail::addGru(p, "pt_dec.frame", 2 * L, dims_.frame_hidden, rng);
  note_init_ = detail::addLinear(p, "pt_dec.note_init", dims_.note_hidden, dims_.frame_hidden, rng);
  note_gru_ =
      detail::addGru(p, "pt_dec.note", dims_.pitch_emb + kDurationBits, dims_.note_hidden, rng);
  pitch_emb_ = p.addFanIn("pt_dec.pitch_emb", kPitchVocab, dims_.pitch_emb, rng);
  pitch_head_ = detail::addLinear(p, "pt_dec.pitch", kPitchVocab, dims_.note_hidden, rng);
  dur_init_ =
      detail::addLinear(p, "pt_dec.dur_init", dims_.dur_hidden, dims_.note_hidden + dims_.pitch_emb,
                        rng);
  dur_gru_ = detail::addGru(p, "pt_dec.dur", 1, dims_.dur_hidden, rng);
  dur_head_ = detail::addLinear(p, "pt_dec.dur_out", 1, dims_.dur_hidden, rng);
}

template <typename T>
nn::Var VaeModel<T>::biGruFinal(nn::Tape<T>& t, const std::vector<nn::Var>& steps,
                                const detail::GruHandles<T>& fwd,
                                const detail::GruHandles<T>& bwd, int batch, int hidden) {
  const int S = static_cast<int>(steps.size());
  nn::Var h0 = t.input(nn::Mat<T>::Zero(batch, hidden));
  nn::Var fstack = nn::gruSequence(t, steps, h0, params_.node(t, fwd.wx), params_.node(t, fwd.wh),
                                   params_.node(t, fwd.b), false);
  nn::Var bstack = nn::gruSequence(t, steps, h0, params_.node(t, bwd.wx), params_.node(t, bwd.wh),
                                   params_.node(t, bwd.b), true);
  nn::Var ffinal = nn::sliceRows(t, fstack, (S - 1) * batch, batch);
  nn::Var bfinal = nn::sliceRows(t, bstack, 0, batch);  // state after consuming step 0
  return nn::concatCols(t, ffinal, bfinal);
}

template <typename T>
typename VaeModel<T>::Posterior VaeModel<T>::encodeChord(
    nn::Tape<T>& t, const std::vector<nn::Mat<T>>& chord_steps) {
  const int B = static_cast<int>(chord_steps[0].rows());
  std::vector<nn::Var> steps;
  for (const auto& m : chord_steps) steps.push_back(t.input(m));
  nn::Var h = biGruFinal(t, steps, chd_enc_fwd_, chd_enc_bwd_, B, dims_.chord_enc_hidden);
  return Posterior{detail::applyLinear(t, params_, h, chd_mu_),
                   detail::applyLinear(t, params_, h, chd_lv_)};
}

template <typename T>
typename VaeModel<T>::Posterior VaeModel<T>::encodeTexture(nn::Tape<T>& t,
                                                           const nn::Mat<T>& roll,
                                                           TextureTrace* trace) {
  const int B = static_cast<int>(roll.rows());
  const auto geom = dims_.convGeom();
  nn::Var x = t.input(roll);
  nn::Var conv = nn::conv2dValid(t, x, params_.node(t, conv_w_), params_.node(t, conv_b_), geom);
  nn::Var act = nn::relu(t, conv);
  nn::Var pool = nn::maxPoolH(t, act, geom.out_ch, geom.outH(), geom.outW(), 4, 4);
  if (trace) {
    trace->conv_out = act;
    trace->pool_out = pool;
  }
  // Regroup pooled features (c, i, j) into one input per time step j.
  const int ph = dims_.poolH();
  const int w = geom.outW();
  std::vector<nn::Var> steps;
  for (int j = 0; j < w; ++j) {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(geom.out_ch) * ph);
    for (int c = 0; c < geom.out_ch; ++c)
      for (int i = 0; i < ph; ++i) idx.push_back((c * ph + i) * w + j);
    steps.push_back(nn::gatherCols(t, pool, std::move(idx)));
  }
  nn::Var h = biGruFinal(t, steps, txt_enc_fwd_, txt_enc_bwd_, B, dims_.texture_hidden);
  return Posterior{detail::applyLinear(t, params_, h, txt_mu_),
                   detail::applyLinear(t, params_, h, txt_lv_)};
}

template <typename T>
typename VaeModel<T>::ChordLogits VaeModel<T>::decodeChord(nn::Tape<T>& t, nn::Var z_chd) {
  const int B = static_cast<int>(t.val(z_chd).rows());
  // Non-autoregressive bidirectional decoder: z_chd is the input at all 8 steps.
  std::vector<nn::Var> steps(kBeatsPerSegment, z_chd);
  nn::Var h0 = t.input(nn::Mat<T>::Zero(B, dims_.chord_dec_hidden));
  nn::Var fstack = nn::gruSequence(t, steps, h0, params_.node(t, chd_dec_fwd_.wx),
                                   params_.node(t, chd_dec_fwd_.wh),
                                   params_.node(t, chd_dec_fwd_.b), false);
  nn::Var bstack = nn::gruSequence(t, steps, h0, params_.node(t, chd_dec_bwd_.wx),
                                   params_.node(t, chd_dec_bwd_.wh),
                                   params_.node(t, chd_dec_bwd_.b), true);
  nn::Var h = nn::concatCols(t, fstack, bstack);  // (8B x 2H), step-aligned
  return ChordLogits{detail::applyLinear(t, params_, h, root_head_),
                     detail::applyLinear(t, params_, h, bass_head_),
                     detail::applyLinear(t, params_, h, chroma_head_)};
}

template <typename T>
typename VaeModel<T>::PianoTreeLogits VaeModel<T>::decodePianoTreeTeacherForced(
    nn::Tape<T>& t, nn::Var z, const VaeBatch<T>& batch) {
  const int B = batch.batch;
  nn::Var h0f = nn::tanhAct(t, detail::applyLinear(t, params_, z, frame_init_));
  std::vector<nn::Var> frame_inputs(kSegmentSteps, z);
  nn::Var frame_stack =
      nn::gruSequence(t, frame_inputs, h0f, params_.node(t, frame_gru_.wx),
                      params_.node(t, frame_gru_.wh), params_.node(t, frame_gru_.b), false);

  nn::Var emb = params_.node(t, pitch_emb_);
  std::vector<nn::Var> note_stacks;
  note_stacks.reserve(kSegmentSteps);
  for (int f = 0; f < kSegmentSteps; ++f) {
    nn::Var fh = nn::sliceRows(t, frame_stack, f * B, B);
    nn::Var h0n = nn::tanhAct(t, detail::applyLinear(t, params_, fh, note_init_));
    const int S = batch.frame_steps[f];
    std::vector<nn::Var> steps;
    steps.reserve(S);
    for (int s = 0; s < S; ++s) {
      std::vector<int> ids(batch.pt_in_pitch[f].begin() + static_cast<size_t>(s) * B,
                           batch.pt_in_pitch[f].begin() + static_cast<size_t>(s + 1) * B);
      nn::Var pe = nn::gatherRows(t, emb, std::move(ids));
      nn::Var db = t.input(batch.pt_in_durbits[f].middleRows(static_cast<Eigen::Index>(s) * B, B));
      steps.push_back(nn::concatCols(t, pe, db));
    }
    note_stacks.push_back(nn::gruSequence(t, steps, h0n, params_.node(t, note_gru_.wx),
                                          params_.node(t, note_gru_.wh),
                                          params_.node(t, note_gru_.b), false));
  }
  nn::Var all_notes = nn::concatRows(t, note_stacks);
  PianoTreeLogits out;
  out.pitch = detail::applyLinear(t, params_, all_notes, pitch_head_);

  const int N = static_cast<int>(batch.dur_rows.size());
  if (N == 0) {
    out.dur = t.input(nn::Mat<T>::Zero(0, 1));
    return out;
  }
  nn::Var dh = nn::gatherRows(t, all_notes, batch.dur_rows);
  nn::Var dp = nn::gatherRows(t, emb, batch.dur_pitch);
  nn::Var h0d =
      nn::tanhAct(t, detail::applyLinear(t, params_, nn::concatCols(t, dh, dp), dur_init_));
  std::vector<nn::Var> bit_steps;
  for (int k = 0; k < kDurationBits; ++k) bit_steps.push_back(t.input(batch.dur_in_bits.col(k)));
  nn::Var dstack = nn::gruSequence(t, bit_steps, h0d, params_.node(t, dur_gru_.wx),
                                   params_.node(t, dur_gru_.wh), params_.node(t, dur_gru_.b),
                                   false);
  out.dur = detail::applyLinear(t, params_, dstack, dur_head_);
  return out;
}

template <typename T>
typename VaeModel<T>::LossGraph VaeModel<T>::buildLossGraph(nn::Tape<T>& t,
                                                            const VaeBatch<T>& batch,
                                                            const nn::Mat<T>* eps_chd,
                                                            const nn::Mat<T>* eps_txt, T kl_weight,
                                                            TextureTrace* trace) {
  LossGraph g;
  Posterior chd = encodeChord(t, batch.chord_steps);
  Posterior txt = encodeTexture(t, batch.roll, trace);
  g.chd_mu = chd.mu;
  g.chd_logvar = chd.logvar;
  g.txt_mu = txt.mu;
  g.txt_logvar = txt.logvar;

  auto sample = [&](const Posterior& post, const nn::Mat<T>* eps) {
    if (!eps) return post.mu;  // evaluation mode
    nn::Var std = nn::expAct(t, nn::scale(t, post.logvar, T(0.5)));
    return nn::add(t, post.mu, nn::hadamard(t, std, t.input(*eps)));
  };
  g.z_chd = sample(chd, eps_chd);
  g.z_txt = sample(txt, eps_txt);
  nn::Var z = nn::concatCols(t, g.z_chd, g.z_txt);

  g.chord_logits = decodeChord(t, g.z_chd);
  g.pt_logits = decodePianoTreeTeacherForced(t, z, batch);

  const T inv_b = T(1) / static_cast<T>(batch.batch);
  nn::Var loss_root =
      nn::softmaxCrossEntropy(t, g.chord_logits.root, batch.root_labels, {}, inv_b);
  nn::Var loss_bass =
      nn::softmaxCrossEntropy(t, g.chord_logits.bass, batch.bass_labels, {}, inv_b);
  nn::Var loss_chroma = nn::bceWithLogits(t, g.chord_logits.chroma, batch.chroma_targets, {},
                                          inv_b);
  g.loss_chord = nn::addWeighted(t, {loss_root, loss_bass, loss_chroma}, {T(1), T(1), T(1)});

  nn::Var loss_pitch =
      nn::softmaxCrossEntropy(t, g.pt_logits.pitch, batch.pt_labels, batch.pt_mask, inv_b);
  const int N = static_cast<int>(batch.dur_rows.size());
  nn::Var loss_dur;
  if (N > 0) {
    nn::Mat<T> dur_targets(static_cast<Eigen::Index>(kDurationBits) * N, 1);
    for (int k = 0; k < kDurationBits; ++k)
      dur_targets.middleRows(static_cast<Eigen::Index>(k) * N, N) = batch.dur_target_bits.col(k);
    loss_dur = nn::bceWithLogits(t, g.pt_logits.dur, std::move(dur_targets), {}, inv_b);
  } else {
    loss_dur = t.input(nn::Mat<T>::Zero(1, 1));
  }
  g.loss_pt = nn::addWeighted(t, {loss_pitch, loss_dur}, {T(1), T(1)});

  g.kl_chd = nn::klStdNormal(t, chd.mu, chd.logvar, inv_b);
  g.kl_txt = nn::klStdNormal(t, txt.mu, txt.logvar, inv_b);
  g.total = nn::addWeighted(t, {g.loss_chord, g.loss_pt, g.kl_chd, g.kl_txt},
                            {T(1), T(1), kl_weight, kl_weight});
  return g;
}

template <typename T>
PianoTree VaeModel<T>::greedyDecode(const nn::Mat<T>& z) const {
  const auto& p = params_;
  auto value = [&](typename nn::ParamStore<T>::Handle h) -> const nn::Mat<T>& {
    return p.value(h);
  };
  auto linearRow = [&](const nn::Mat<T>& x, const detail::LinearHandles<T>& h) {
    nn::Mat<T> y = x * value(h.w).transpose();
    y.rowwise() += value(h.b).row(0);
    return y;
  };

  PianoTree tree;
  nn::Mat<T> hf = linearRow(z, frame_init_).array().tanh().matrix();
  const auto& emb = value(pitch_emb_);
  for (int f = 0; f < kSegmentSteps; ++f) {
    nn::gruStep(value(frame_gru_.wx), value(frame_gru_.wh), value(frame_gru_.b), z, hf);
    nn::Mat<T> hn = linearRow(hf, note_init_).array().tanh().matrix();
    int token = kStartToken;
    std::array<int, kDurationBits> prev_bits{};
    int last_pitch = -1;
    for (int count = 0; count < kMaxNotesPerFrame; ++count) {
      nn::Mat<T> x(1, dims_.pitch_emb + kDurationBits);
      x.leftCols(dims_.pitch_emb) = emb.row(token);
      for (int k = 0; k < kDurationBits; ++k)
        x(0, dims_.pitch_emb + k) = static_cast<T>(prev_bits[k]);
      nn::gruStep(value(note_gru_.wx), value(note_gru_.wh), value(note_gru_.b), x, hn);
      nn::Mat<T> logits = linearRow(hn, pitch_head_);
      logits(0, kStartToken) = T(-1e30);
      for (int q = 0; q <= last_pitch; ++q) logits(0, q) = T(-1e30);
      int best = 0;
      logits.row(0).maxCoeff(&best);
      if (best == kStopToken) break;

      nn::Mat<T> cond(1, dims_.note_hidden + dims_.pitch_emb);
      cond.leftCols(dims_.note_hidden) = hn;
      cond.rightCols(dims_.pitch_emb) = emb.row(best);
      nn::Mat<T> hd = linearRow(cond, dur_init_).array().tanh().matrix();
      std::array<int, kDurationBits> bits{};
      nn::Mat<T> bit_in = nn::Mat<T>::Zero(1, 1);
      for (int k = 0; k < kDurationBits; ++k) {
        nn::gruStep(value(dur_gru_.wx), value(dur_gru_.wh), value(dur_gru_.b), bit_in, hd);
        T logit = linearRow(hd, dur_head_)(0, 0);
        bits[k] = logit > T(0) ? 1 : 0;
        bit_in(0, 0) = static_cast<T>(bits[k]);
      }
      tree.frames[f].push_back(PianoTreeNote{best, durationFromBits(bits)});
      token = best;
      prev_bits = bits;
      last_pitch = best;
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Batch preparation
// ---------------------------------------------------------------------------

template <typename T>
std::vector<nn::Mat<T>> chordStepInputs(const std::vector<ChordProgression>& progs) {
  const int B = static_cast<int>(progs.size());
  std::vector<nn::Mat<T>> steps(kBeatsPerSegment, nn::Mat<T>::Zero(B, kChordDims));
  for (int b = 0; b < B; ++b) {
    Eigen::MatrixXi enc = encodeMatrix(progs[b]);
    for (int s = 0; s < kBeatsPerSegment; ++s)
      steps[s].row(b) = enc.col(s).transpose().template cast<T>();
  }
  return steps;
}

template <typename T>
VaeBatch<T> makeVaeBatch(const std::vector<Segment>& segments, ExtractMode mode,
                         const std::vector<ChordProgression>* chords) {
  const int B = static_cast<int>(segments.size());
  if (B == 0) throw DataError("empty batch");
  VaeBatch<T> batch;
  batch.batch = B;

  std::vector<ChordProgression> progs;
  progs.reserve(B);
  for (int b = 0; b < B; ++b)
    progs.push_back(chords ? (*chords)[b] : extractProgression(segments[b], mode));
  batch.chord_steps = chordStepInputs<T>(progs);

  batch.root_labels.assign(static_cast<size_t>(kBeatsPerSegment) * B, -1);
  batch.bass_labels.assign(static_cast<size_t>(kBeatsPerSegment) * B, -1);
  batch.chroma_targets = nn::Mat<T>::Zero(static_cast<Eigen::Index>(kBeatsPerSegment) * B, 12);
  for (int b = 0; b < B; ++b) {
    for (int s = 0; s < kBeatsPerSegment; ++s) {
      const ChordFrame& f = progs[b].frames[s];
      const bool leading_silence = f.is_silent && f.chroma == 0;
      if (!leading_silence) {
        batch.root_labels[static_cast<size_t>(s) * B + b] = f.root;
        batch.bass_labels[static_cast<size_t>(s) * B + b] = f.bass;
      }
      for (int pc = 0; pc < 12; ++pc)
        batch.chroma_targets(static_cast<Eigen::Index>(s) * B + b, pc) =
            f.chromaHas(pc) ? T(1) : T(0);
    }
  }

  batch.roll = nn::Mat<T>::Zero(B, kNumPitches * kSegmentSteps);
  std::vector<PianoTree> trees;
  trees.reserve(B);
  for (int b = 0; b < B; ++b) {
    for (const auto& n : segments[b].notes)
      batch.roll(b, n.pitch * kSegmentSteps + n.onset) = static_cast<T>(n.duration);
    trees.push_back(pianoTreeFromSegment(segments[b]));
  }

  batch.frame_steps.resize(kSegmentSteps);
  batch.pt_in_pitch.resize(kSegmentSteps);
  batch.pt_in_durbits.resize(kSegmentSteps);
  int global_row = 0;
  for (int f = 0; f < kSegmentSteps; ++f) {
    int max_notes = 0;
    for (const auto& tree : trees)
      max_notes = std::max(max_notes, static_cast<int>(tree.frames[f].size()));
    const int S = max_notes + 1;  // plus the stop decision
    batch.frame_steps[f] = S;
    auto& in_pitch = batch.pt_in_pitch[f];
    in_pitch.assign(static_cast<size_t>(S) * B, kStopToken);
    auto& in_bits = batch.pt_in_durbits[f];
    in_bits = nn::Mat<T>::Zero(static_cast<Eigen::Index>(S) * B, kDurationBits);
    for (int s = 0; s < S; ++s) {
      for (int b = 0; b < B; ++b) {
        const auto& notes = trees[b].frames[f];
        const int k = static_cast<int>(notes.size());
        const size_t row = static_cast<size_t>(s) * B + b;
        if (s == 0) {
          in_pitch[row] = kStartToken;
        } else if (s - 1 < k) {
          in_pitch[row] = notes[s - 1].pitch;
          auto bits = durationToBits(notes[s - 1].duration);
          for (int q = 0; q < kDurationBits; ++q) in_bits(row, q) = static_cast<T>(bits[q]);
        }
        int label = -1;
        if (s < k) {
          label = notes[s].pitch;
        } else if (s == k) {
          label = kStopToken;
        }
        batch.pt_labels.push_back(label);
        batch.pt_mask.push_back(label >= 0 ? T(1) : T(0));
        if (s < k) {
          batch.dur_rows.push_back(global_row + static_cast<int>(row));
          batch.dur_pitch.push_back(notes[s].pitch);
        }
      }
    }
    global_row += S * B;
  }
  batch.note_slot_count = global_row;

  const int N = static_cast<int>(batch.dur_rows.size());
  batch.dur_in_bits = nn::Mat<T>::Zero(N, kDurationBits);
  batch.dur_target_bits = nn::Mat<T>::Zero(N, kDurationBits);
  int ni = 0;
  for (int f = 0; f < kSegmentSteps; ++f) {
    for (int s = 0; s + 1 < batch.frame_steps[f]; ++s) {
      for (int b = 0; b < B; ++b) {
        const auto& notes = trees[b].frames[f];
        if (s >= static_cast<int>(notes.size())) continue;
        auto bits = durationToBits(notes[s].duration);
        for (int k = 0; k < kDurationBits; ++k) {
          batch.dur_target_bits(ni, k) = static_cast<T>(bits[k]);
          if (k > 0) batch.dur_in_bits(ni, k) = static_cast<T>(bits[k - 1]);
        }
        ++ni;
      }
    }
  }
  return batch;
}

template <typename T>
EncodedBatch<T> encodeSegments(VaeModel<T>& model, const std::vector<Segment>& segments,
                               ExtractMode mode) {
  const int L = model.dims().latent;
  EncodedBatch<T> out;
  out.chd_mu.resize(segments.size(), L);
  out.chd_logvar.resize(segments.size(), L);
  out.txt_mu.resize(segments.size(), L);
  out.txt_logvar.resize(segments.size(), L);
  constexpr int kChunk = 256;
  for (size_t start = 0; start < segments.size(); start += kChunk) {
    size_t n = std::min<size_t>(kChunk, segments.size() - start);
    std::vector<Segment> chunk(segments.begin() + start, segments.begin() + start + n);
    VaeBatch<T> batch = makeVaeBatch<T>(chunk, mode);
    nn::Tape<T> t;
    auto chd = model.encodeChord(t, batch.chord_steps);
    auto txt = model.encodeTexture(t, batch.roll);
    out.chd_mu.middleRows(start, n) = t.val(chd.mu);
    out.chd_logvar.middleRows(start, n) = t.val(chd.logvar);
    out.txt_mu.middleRows(start, n) = t.val(txt.mu);
    out.txt_logvar.middleRows(start, n) = t.val(txt.logvar);
  }
  return out;
}

template <typename T>
ReconMetrics reconMetricsFromGraph(const nn::Tape<T>& t,
                                   const typename VaeModel<T>::LossGraph& g,
                                   const VaeBatch<T>& batch) {
  ReconMetrics m;
  const auto& pitch = t.val(g.pt_logits.pitch);
  int pitch_hits = 0, pitch_total = 0;
  for (Eigen::Index i = 0; i < pitch.rows(); ++i) {
    if (batch.pt_labels[i] < 0) continue;
    int best = 0;
    pitch.row(i).maxCoeff(&best);
    pitch_hits += best == batch.pt_labels[i] ? 1 : 0;
    ++pitch_total;
  }
  m.pitch_accuracy = pitch_total ? static_cast<double>(pitch_hits) / pitch_total : 0;
  m.note_slots = pitch_total;

  const auto& dur = t.val(g.pt_logits.dur);
  const int N = static_cast<int>(batch.dur_rows.size());
  int dur_hits = 0;
  for (int k = 0; k < kDurationBits; ++k)
    for (int i = 0; i < N; ++i)
      dur_hits += (dur(static_cast<Eigen::Index>(k) * N + i, 0) > 0) ==
                          (batch.dur_target_bits(i, k) > T(0.5))
                      ? 1
                      : 0;
  m.dur_bit_accuracy = N ? static_cast<double>(dur_hits) / (N * kDurationBits) : 1.0;

  auto headAccuracy = [&](nn::Var logits, const std::vector<int>& labels) {
    const auto& x = t.val(logits);
    int hits = 0, total = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (labels[i] < 0) continue;
      int best = 0;
      x.row(i).maxCoeff(&best);
      hits += best == labels[i] ? 1 : 0;
      ++total;
    }
    m.beats = total;
    return total ? static_cast<double>(hits) / total : 0;
  };
  m.root_accuracy = headAccuracy(g.chord_logits.root, batch.root_labels);
  m.bass_accuracy = headAccuracy(g.chord_logits.bass, batch.bass_labels);

  const auto& chroma = t.val(g.chord_logits.chroma);
  double tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < chroma.rows(); ++i) {
    for (int pc = 0; pc < 12; ++pc) {
      bool pred = chroma(i, pc) > 0;
      bool truth = batch.chroma_targets(i, pc) > T(0.5);
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
  }
  m.chroma_f1 = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 1.0;
  return m;
}

}  // namespace chordtex
