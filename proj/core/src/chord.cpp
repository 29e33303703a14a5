#include "chordtex/chord.hpp"

#include "chordtex/error.hpp"

#include <algorithm>
#include <cctype>

namespace chordtex {

namespace {

struct ChordTemplate {
  const char* name;
  std::array<int, 4> intervals;  // -1 terminated for triads
  int size;
};

// Triads first, tetrads second; order also serves as the final tie break.
constexpr ChordTemplate kVocabulary[] = {
    {"maj", {0, 4, 7, -1}, 3},   {"min", {0, 3, 7, -1}, 3},  {"dim", {0, 3, 6, -1}, 3},
    {"aug", {0, 4, 8, -1}, 3},   {"sus2", {0, 2, 7, -1}, 3}, {"sus4", {0, 5, 7, -1}, 3},
    {"7", {0, 4, 7, 10}, 4},     {"maj7", {0, 4, 7, 11}, 4}, {"min7", {0, 3, 7, 10}, 4},
};

int popcount12(uint16_t m) { return __builtin_popcount(m & 0xFFF); }

uint16_t templateMask(const ChordTemplate& t, int root) {
  uint16_t m = 0;
  for (int i = 0; i < t.size; ++i) m |= 1u << ((root + t.intervals[i]) % 12);
  return m;
}

// Score = |observed ∩ template| - 0.5 |template \ observed| - 0.3 |observed \ template|.
double matchScore(uint16_t observed, uint16_t tmpl) {
  return popcount12(observed & tmpl) - 0.5 * popcount12(tmpl & ~observed) -
         0.3 * popcount12(observed & ~tmpl);
}

int bestRoot(uint16_t observed) {
  double best_score = -1e9;
  int best_root = 0;
  int best_size = 0;
  for (int root = 0; root < 12; ++root) {
    for (const auto& t : kVocabulary) {
      double s = matchScore(observed, templateMask(t, root));
      bool better = s > best_score + 1e-12;
      if (!better && s > best_score - 1e-12) {
        // Tie: triads before tetrads, then lowest root pitch class.
        better = t.size < best_size || (t.size == best_size && root < best_root);
      }
      if (better) {
        best_score = s;
        best_root = root;
        best_size = t.size;
      }
    }
  }
  return best_root;
}

}  // namespace

ChordProgression extractProgression(const Segment& seg, ExtractMode mode) {
  ChordProgression prog;
  for (int b = 0; b < kBeatsPerSegment; ++b) {
    const int beat_start = b * kStepsPerBeat;
    const int beat_end = beat_start + kStepsPerBeat;
    uint16_t observed = 0;
    int lowest_pitch = 128;
    for (const auto& n : seg.notes) {
      bool in_beat = mode == ExtractMode::kSounding
                         ? n.onset < beat_end && n.onset + n.duration > beat_start
                         : n.onset >= beat_start && n.onset < beat_end;
      if (!in_beat) continue;
      observed |= 1u << (n.pitch % 12);
      lowest_pitch = std::min(lowest_pitch, n.pitch);
    }
    ChordFrame& frame = prog.frames[b];
    if (observed == 0) {
      frame.is_silent = true;
      if (b > 0) {
        frame.root = prog.frames[b - 1].root;
        frame.bass = prog.frames[b - 1].bass;
        frame.chroma = prog.frames[b - 1].chroma;
      }
    } else {
      frame.root = bestRoot(observed);
      frame.bass = lowest_pitch % 12;
      frame.chroma = observed;
    }
  }
  return prog;
}

ChordProgression rotateProgression(const ChordProgression& prog, int semitones) {
  int s = ((semitones % 12) + 12) % 12;
  ChordProgression out = prog;
  for (auto& f : out.frames) {
    if (f.chroma == 0 && f.is_silent) continue;  // leading silence has no content
    f.root = (f.root + s) % 12;
    f.bass = (f.bass + s) % 12;
    uint16_t c = f.chroma & 0xFFF;
    f.chroma = ((c << s) | (c >> (12 - s))) & 0xFFF;
  }
  return out;
}

Eigen::MatrixXi encodeMatrix(const ChordProgression& prog) {
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(kChordDims, kBeatsPerSegment);
  for (int b = 0; b < kBeatsPerSegment; ++b) {
    const ChordFrame& f = prog.frames[b];
    if (f.is_silent && f.chroma == 0) continue;  // leading silence: all-zero column
    m(f.root, b) = 1;
    m(12 + f.bass, b) = 1;
    for (int pc = 0; pc < 12; ++pc)
      if (f.chromaHas(pc)) m(24 + pc, b) = 1;
  }
  return m;
}

ChordProgression decodeMatrix(const Eigen::MatrixXi& m) {
  if (m.rows() != kChordDims || m.cols() != kBeatsPerSegment)
    throw DataError("chord matrix must be 36x8");
  ChordProgression prog;
  for (int b = 0; b < kBeatsPerSegment; ++b) {
    ChordFrame& f = prog.frames[b];
    if (m.col(b).sum() == 0) {
      f = ChordFrame{0, 0, 0, true};
      continue;
    }
    int root = -1, bass = -1;
    for (int pc = 0; pc < 12; ++pc) {
      if (m(pc, b)) {
        if (root >= 0) throw DataError("malformed chord matrix: multiple root bits in column " +
                                       std::to_string(b));
        root = pc;
      }
      if (m(12 + pc, b)) {
        if (bass >= 0) throw DataError("malformed chord matrix: multiple bass bits in column " +
                                       std::to_string(b));
        bass = pc;
      }
      if (m(24 + pc, b)) f.chroma |= 1u << pc;
    }
    if (root < 0 || bass < 0)
      throw DataError("malformed chord matrix: missing root or bass bit in column " +
                      std::to_string(b));
    f.root = root;
    f.bass = bass;
  }
  return prog;
}

namespace {

const ChordTemplate* findTemplate(const std::string& quality) {
  std::string q = quality;
  if (q.empty()) q = "maj";
  if (q == "m") q = "min";
  if (q == "m7") q = "min7";
  for (const auto& t : kVocabulary)
    if (q == t.name) return &t;
  return nullptr;
}

int parseNoteName(const std::string& s, size_t& pos) {
  static constexpr int kLetterPc[7] = {9, 11, 0, 2, 4, 5, 7};  // A..G
  if (pos >= s.size()) throw DataError("chord symbol missing note letter: '" + s + "'");
  char letter = static_cast<char>(std::toupper(s[pos]));
  if (letter < 'A' || letter > 'G')
    throw DataError("bad note letter '" + std::string(1, s[pos]) + "' in chord symbol '" + s + "'");
  ++pos;
  int pc = kLetterPc[letter - 'A'];
  while (pos < s.size() && (s[pos] == '#' || s[pos] == 'b')) {
    pc += s[pos] == '#' ? 1 : -1;
    ++pos;
  }
  return ((pc % 12) + 12) % 12;
}

}  // namespace

ChordSymbol parseChordSymbol(const std::string& text) {
  ChordSymbol sym;
  sym.text = text;
  size_t pos = 0;
  sym.root = parseNoteName(text, pos);

  size_t slash = text.find('/', pos);
  std::string quality = text.substr(pos, slash == std::string::npos ? std::string::npos : slash - pos);
  const ChordTemplate* tmpl = findTemplate(quality);
  if (!tmpl)
    throw DataError("unknown chord quality '" + quality + "' in chord symbol '" + text + "'");
  sym.chroma = templateMask(*tmpl, sym.root);

  if (slash != std::string::npos) {
    size_t bpos = slash + 1;
    sym.bass = parseNoteName(text, bpos);
    if (bpos != text.size())
      throw DataError("trailing characters in chord symbol '" + text + "'");
    sym.chroma |= 1u << sym.bass;
  } else {
    sym.bass = sym.root;
  }
  return sym;
}

std::vector<ChordSymbol> parseChordSymbols(const std::string& text) {
  std::vector<ChordSymbol> out;
  std::string token;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      token.push_back(text[i]);
    } else if (!token.empty()) {
      out.push_back(parseChordSymbol(token));
      token.clear();
    }
  }
  return out;
}

ChordProgression progressionFromSymbols(const std::vector<ChordSymbol>& symbols,
                                        int beats_per_symbol) {
  if (beats_per_symbol < 1 ||
      static_cast<int>(symbols.size()) * beats_per_symbol != kBeatsPerSegment) {
    throw DataError("chord symbols must fill exactly 8 beats (got " +
                    std::to_string(symbols.size()) + " symbols at " +
                    std::to_string(beats_per_symbol) + " beats each)");
  }
  ChordProgression prog;
  for (int b = 0; b < kBeatsPerSegment; ++b) {
    const ChordSymbol& s = symbols[b / beats_per_symbol];
    prog.frames[b] = ChordFrame{s.root, s.bass, s.chroma, false};
  }
  return prog;
}

std::string pitchClassName(int pc) {
  static constexpr const char* kNames[12] = {"C",  "C#", "D",  "D#", "E",  "F",
                                             "F#", "G",  "G#", "A",  "A#", "B"};
  return kNames[((pc % 12) + 12) % 12];
}

}  // namespace chordtex
