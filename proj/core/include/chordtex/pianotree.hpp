#pragma once

#include "chordtex/note.hpp"

#include <array>
#include <vector>

namespace chordtex {

inline constexpr int kMaxNotesPerFrame = 16;
inline constexpr int kDurationBits = 5;        // (duration - 1) in [0, 31] as 5 binary digits
inline constexpr int kPitchVocab = 130;        // 128 pitches + start + stop tokens
inline constexpr int kStartToken = 128;
inline constexpr int kStopToken = 129;

struct PianoTreeNote {
  int pitch = 0;     // [0, 127]
  int duration = 1;  // [1, 32]

  friend bool operator==(const PianoTreeNote&, const PianoTreeNote&) = default;
};

// Frame -> note -> (pitch, duration) hierarchy: 32 frames, each an
// ascending-pitch note list of at most 16 entries.
struct PianoTree {
  std::array<std::vector<PianoTreeNote>, kSegmentSteps> frames;

  friend bool operator==(const PianoTree&, const PianoTree&) = default;
};

// MSB-first binary code of (duration - 1).
std::array<int, kDurationBits> durationToBits(int duration);
int durationFromBits(const std::array<int, kDurationBits>& bits);

// Frames keep at most 16 notes; overfull frames are truncated from the top
// of the ascending-pitch list.
PianoTree pianoTreeFromSegment(const Segment& seg);

// Inverse conversion; durations are clipped to the segment boundary.
Segment segmentFromPianoTree(const PianoTree& tree, std::string song_id = "", int start_step = 0);

}  // namespace chordtex
