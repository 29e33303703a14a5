#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace chordtex {

// Fixed segment geometry: 8 beats at 1/4-beat resolution.
inline constexpr int kBeatsPerSegment = 8;
inline constexpr int kStepsPerBeat = 4;
inline constexpr int kSegmentSteps = kBeatsPerSegment * kStepsPerBeat;  // 32
inline constexpr int kNumPitches = 128;

// A quantized note inside a segment. Onset and duration are in 1/4-beat
// steps; within a Segment, onset is in [0, 32) and onset + duration <= 32.
struct NoteEvent {
  int onset = 0;
  int pitch = 0;
  int duration = 1;

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

// An 8-beat window of a song, with notes sorted by (onset, pitch) and no
// duplicate (onset, pitch) pairs.
struct Segment {
  std::vector<NoteEvent> notes;
  std::string song_id;
  int start_step = 0;  // offset of the window in the source song, in steps

  friend bool operator==(const Segment&, const Segment&) = default;
};

// An unquantized note as read from a MIDI file, in absolute beats.
struct RawNote {
  double onset_beats = 0.0;
  int pitch = 0;
  double duration_beats = 0.0;
};

struct Track {
  std::string name;
  std::vector<RawNote> notes;  // time-sorted
};

struct MeterEvent {
  int bar = 0;
  int numerator = 4;
  int denominator = 4;
};

struct TempoEvent {
  double beat = 0.0;
  double bpm = 120.0;
};

// A parsed song: named note tracks in absolute time plus tempo/meter maps.
struct Song {
  std::string id;
  std::vector<Track> tracks;
  std::vector<MeterEvent> meters;  // non-empty; defaults to 4/4 at bar 0
  std::vector<TempoEvent> tempos;
};

// 128 x 32 matrix; entry (p, t) holds the duration of a note with pitch p
// whose onset is at step t, zero otherwise.
using PianoRollDurationMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace chordtex
