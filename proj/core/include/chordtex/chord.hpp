#pragma once

#include "chordtex/note.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace chordtex {

inline constexpr int kChordDims = 36;  // root 12 + bass 12 + chroma 12

// One beat of harmony: root and bass pitch classes plus a 12-bit chroma set.
// Silent beats carry the previous frame's content; a silent first beat has
// root = bass = 0 and empty chroma.
struct ChordFrame {
  int root = 0;
  int bass = 0;
  uint16_t chroma = 0;  // bit p = pitch class p present
  bool is_silent = false;

  bool chromaHas(int pc) const { return (chroma >> pc) & 1; }
  friend bool operator==(const ChordFrame&, const ChordFrame&) = default;
};

struct ChordProgression {
  std::array<ChordFrame, kBeatsPerSegment> frames;

  friend bool operator==(const ChordProgression&, const ChordProgression&) = default;
};

enum class ExtractMode {
  kSounding,   // a note contributes to every beat during which it sounds
  kOnsetOnly,  // a note contributes only to the beat containing its onset
};

// Rule-based chord recognition at one-beat resolution. Scores the observed
// pitch-class set of each beat against a fixed triad/tetrad template
// vocabulary over all 12 roots; the stored chroma is the observed set, not
// the matched template.
ChordProgression extractProgression(const Segment& seg,
                                    ExtractMode mode = ExtractMode::kSounding);

// Rotate every frame of a progression by `semitones` pitch classes.
ChordProgression rotateProgression(const ChordProgression& prog, int semitones);

// 36 x 8 binary matrix: rows 0-11 root one-hot, 12-23 bass one-hot, 24-35
// chroma. Leading-silence frames (empty chroma) encode as all-zero columns;
// carried silent frames encode their carried content.
Eigen::MatrixXi encodeMatrix(const ChordProgression& prog);

// Inverse of encodeMatrix. Throws DataError when a non-silent column has
// zero or multiple root (or bass) bits.
ChordProgression decodeMatrix(const Eigen::MatrixXi& m);

// A chord symbol in the external label grammar: root letter with optional
// accidental, optional quality (maj, m/min, dim, aug, sus2, sus4, 7, maj7,
// m7/min7), optional "/bass". Examples: C, Am, F#dim, G7, Bb/D.
struct ChordSymbol {
  int root = 0;
  int bass = 0;
  uint16_t chroma = 0;
  std::string text;
};

ChordSymbol parseChordSymbol(const std::string& text);

// Whitespace-separated symbol list.
std::vector<ChordSymbol> parseChordSymbols(const std::string& text);

// Builds one 8-beat progression from externally supplied labels; each symbol
// spans beats_per_symbol beats and the symbols must fill exactly 8 beats.
ChordProgression progressionFromSymbols(const std::vector<ChordSymbol>& symbols,
                                        int beats_per_symbol = 2);

std::string pitchClassName(int pc);

}  // namespace chordtex
