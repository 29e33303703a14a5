#pragma once

#include "chordtex/note.hpp"
#include "chordtex/rng.hpp"

#include <optional>
#include <vector>

namespace chordtex {

// Round a beat position to the nearest 1/4-beat grid index, ties up.
int quantizeToGrid(double beats);

// Normalizes a raw note list into a valid Segment: sorts by (onset, pitch),
// merges duplicate (onset, pitch) pairs keeping the longer duration, and
// clips durations at the segment boundary.
Segment makeSegment(std::vector<NoteEvent> notes, std::string song_id, int start_step);

struct SegmentationResult {
  std::vector<Segment> segments;
  bool meter_ok = true;  // false when the song was skipped (not 2/4 or 4/4)
};

// Cuts a song into 8-beat segments taken every hop_beats beats. Songs whose
// meter is not entirely 2/4 or 4/4 are skipped. Trailing partial windows are
// dropped. Pass track_filter to restrict which tracks contribute notes
// (empty = all tracks, merged).
SegmentationResult quantizeAndSegment(const Song& song, int hop_beats,
                                      const std::vector<std::string>& track_filter = {});

PianoRollDurationMatrix toMatrix(const Segment& seg);
Segment fromMatrix(const PianoRollDurationMatrix& m, std::string song_id = "",
                   int start_step = 0);

// F_i: shift every pitch by `semitones`; notes leaving [0, 127] are dropped.
Segment transpose(const Segment& seg, int semitones);

// P_i: per beat, with probability `prob` shift every note onsetting in that
// beat by one semitone, direction drawn equiprobably per selected beat.
Segment perturbPitch(const Segment& seg, double prob, Rng& rng);

// R_i: independently per note, with probability `prob` replace the duration
// by max(1, floor(duration / 2)).
Segment halveDurations(const Segment& seg, double prob, Rng& rng);

}  // namespace chordtex
