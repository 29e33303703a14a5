#pragma once

#include "chordtex/chord.hpp"
#include "chordtex/error.hpp"
#include "chordtex/nn/attention.hpp"
#include "chordtex/nn/conv.hpp"
#include "chordtex/nn/params.hpp"
#include "chordtex/nn/rnn.hpp"
#include "chordtex/nn/tape.hpp"
#include "chordtex/pianotree.hpp"
#include "chordtex/score_ir.hpp"

#include <string>
#include <vector>

namespace chordtex {

// Model widths. The defaults are the fixed contract sizes (GRU hiddens
// 256/512/512, latent 256); tiny() is a width-reduced variant for
// finite-difference gradient checks.
struct VaeDims {
  int latent = 256;
  int chord_enc_hidden = 256;
  int chord_dec_hidden = 512;
  int texture_hidden = 512;
  int frame_hidden = 512;
  int note_hidden = 512;
  int dur_hidden = 64;
  int pitch_emb = 128;
  int conv_channels = 10;

  nn::Conv2dGeom convGeom() const {
    return nn::Conv2dGeom{kNumPitches, kSegmentSteps, 12, 4, 1, 4, conv_channels};
  }
  int poolH() const {
    auto g = convGeom();
    return (g.outH() - 4) / 4 + 1;
  }
  int textureStepFeatures() const { return conv_channels * poolH(); }

  static VaeDims full() { return VaeDims{}; }
  static VaeDims tiny() {
    VaeDims d;
    d.latent = 8;
    d.chord_enc_hidden = 16;
    d.chord_dec_hidden = 16;
    d.texture_hidden = 16;
    d.frame_hidden = 16;
    d.note_hidden = 16;
    d.dur_hidden = 8;
    d.pitch_emb = 8;
    d.conv_channels = 3;
    return d;
  }
};

namespace detail {

template <typename T>
struct GruHandles {
  typename nn::ParamStore<T>::Handle wx, wh, b;
};

template <typename T>
struct LinearHandles {
  typename nn::ParamStore<T>::Handle w, b;
};

}  // namespace detail

// Teacher-forcing view of one batch of segments: chord-progression inputs
// and targets plus the flattened PianoTree token layout. Row convention is
// step-major: step s of batch item b lives at row s * batch + b.
template <typename T>
struct VaeBatch {
  int batch = 0;
  std::vector<nn::Mat<T>> chord_steps;  // 8 x (B x 36)
  std::vector<int> root_labels;         // 8B; -1 marks leading-silence beats
  std::vector<int> bass_labels;
  nn::Mat<T> chroma_targets;  // (8B) x 12
  nn::Mat<T> roll;            // B x 4096, flat index = pitch * 32 + step

  std::vector<int> frame_steps;               // teacher steps per frame (>= 1)
  std::vector<std::vector<int>> pt_in_pitch;  // per frame: (S_f * B) token ids
  std::vector<nn::Mat<T>> pt_in_durbits;      // per frame: (S_f * B) x 5
  std::vector<int> pt_labels;                 // concatenated over frames; -1 = pad
  std::vector<T> pt_mask;
  int note_slot_count = 0;      // sum of S_f * B
  std::vector<int> dur_rows;    // rows of real notes in the concatenated layout
  std::vector<int> dur_pitch;   // ground-truth pitch ids conditioning duration
  nn::Mat<T> dur_in_bits;       // N x 5 teacher inputs (col k feeds bit step k)
  nn::Mat<T> dur_target_bits;   // N x 5
};

template <typename T>
class VaeModel {
 public:
  VaeModel(VaeDims dims, uint64_t seed);

  const VaeDims& dims() const { return dims_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  struct Posterior {
    nn::Var mu, logvar;
  };

  struct TextureTrace {
    nn::Var conv_out;  // B x (ch * 117 * 8), pre-pool (post-ReLU)
    nn::Var pool_out;  // B x (ch * 29 * 8)
  };

  Posterior encodeChord(nn::Tape<T>& t, const std::vector<nn::Mat<T>>& chord_steps);
  Posterior encodeTexture(nn::Tape<T>& t, const nn::Mat<T>& roll,
                          TextureTrace* trace = nullptr);

  struct ChordLogits {
    nn::Var root, bass, chroma;  // each (8B) x 12, step-major rows
  };
  ChordLogits decodeChord(nn::Tape<T>& t, nn::Var z_chd);

  struct PianoTreeLogits {
    nn::Var pitch;  // (sum_f S_f * B) x 130
    nn::Var dur;    // (5N) x 1, bit-step-major blocks
  };
  PianoTreeLogits decodePianoTreeTeacherForced(nn::Tape<T>& t, nn::Var z,
                                               const VaeBatch<T>& batch);

  // Greedy autoregressive decode of one latent (1 x 2*latent row vector).
  // Structural guarantees: ascending pitches, <= 16 notes per frame,
  // durations in [1, 32].
  PianoTree greedyDecode(const nn::Mat<T>& z) const;

  struct LossGraph {
    nn::Var chd_mu, chd_logvar, txt_mu, txt_logvar;
    nn::Var z_chd, z_txt;
    ChordLogits chord_logits;
    PianoTreeLogits pt_logits;
    nn::Var loss_chord, loss_pt, kl_chd, kl_txt, total;
  };

  // Builds the full training objective. Null eps pointers select evaluation
  // mode (posterior means instead of samples) for that latent.
  LossGraph buildLossGraph(nn::Tape<T>& t, const VaeBatch<T>& batch, const nn::Mat<T>* eps_chd,
                           const nn::Mat<T>* eps_txt, T kl_weight,
                           TextureTrace* trace = nullptr);

 private:
  nn::Var biGruFinal(nn::Tape<T>& t, const std::vector<nn::Var>& steps,
                     const detail::GruHandles<T>& fwd, const detail::GruHandles<T>& bwd,
                     int batch, int hidden);

  VaeDims dims_;
  nn::ParamStore<T> params_;

  detail::GruHandles<T> chd_enc_fwd_, chd_enc_bwd_;
  detail::LinearHandles<T> chd_mu_, chd_lv_;
  detail::GruHandles<T> chd_dec_fwd_, chd_dec_bwd_;
  detail::LinearHandles<T> root_head_, bass_head_, chroma_head_;
  typename nn::ParamStore<T>::Handle conv_w_, conv_b_;
  detail::GruHandles<T> txt_enc_fwd_, txt_enc_bwd_;
  detail::LinearHandles<T> txt_mu_, txt_lv_;
  detail::LinearHandles<T> frame_init_;
  detail::GruHandles<T> frame_gru_;
  detail::LinearHandles<T> note_init_;
  detail::GruHandles<T> note_gru_;
  typename nn::ParamStore<T>::Handle pitch_emb_;
  detail::LinearHandles<T> pitch_head_;
  detail::LinearHandles<T> dur_init_;
  detail::GruHandles<T> dur_gru_;
  detail::LinearHandles<T> dur_head_;
};

// Builds the teacher-forcing batch from segments. Chord targets come from
// extractProgression under `mode` unless per-segment progressions are
// supplied via `chords` (external labels).
template <typename T>
VaeBatch<T> makeVaeBatch(const std::vector<Segment>& segments,
                         ExtractMode mode = ExtractMode::kSounding,
                         const std::vector<ChordProgression>* chords = nullptr);

// Chord-progression step inputs for a batch of progressions (for encoding a
// chord progression without any segment, e.g. prior sampling).
template <typename T>
std::vector<nn::Mat<T>> chordStepInputs(const std::vector<ChordProgression>& progs);

// Posterior parameters for a batch of segments, evaluation mode.
template <typename T>
struct EncodedBatch {
  nn::Mat<T> chd_mu, chd_logvar, txt_mu, txt_logvar;  // B x latent each
};

template <typename T>
EncodedBatch<T> encodeSegments(VaeModel<T>& model, const std::vector<Segment>& segments,
                               ExtractMode mode = ExtractMode::kSounding);

// Teacher-forced accuracies/metrics of one forward pass.
struct ReconMetrics {
  double pitch_accuracy = 0;     // over real-note + stop slots
  double dur_bit_accuracy = 0;   // over real-note duration bits
  double root_accuracy = 0;      // over non-silent beats
  double bass_accuracy = 0;
  double chroma_f1 = 0;
  int note_slots = 0;
  int beats = 0;
};

template <typename T>
ReconMetrics reconMetricsFromGraph(const nn::Tape<T>& t,
                                   const typename VaeModel<T>::LossGraph& g,
                                   const VaeBatch<T>& batch);

extern template class VaeModel<float>;
extern template class VaeModel<double>;

}  // namespace chordtex

#include "chordtex/vae_impl.hpp"
