#include "chordtex/score_ir.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace chordtex {

int quantizeToGrid(double beats) {
  return static_cast<int>(std::floor(beats * kStepsPerBeat + 0.5));
}

Segment makeSegment(std::vector<NoteEvent> notes, std::string song_id, int start_step) {
  for (auto& n : notes) {
    n.duration = std::max(1, n.duration);
    n.duration = std::min(n.duration, kSegmentSteps - n.onset);
  }
  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });
  // Merge simultaneous equal pitches, keeping the longer duration.
  std::vector<NoteEvent> merged;
  for (const auto& n : notes) {
    if (!merged.empty() && merged.back().onset == n.onset && merged.back().pitch == n.pitch) {
      merged.back().duration = std::max(merged.back().duration, n.duration);
    } else {
      merged.push_back(n);
    }
  }
  return Segment{std::move(merged), std::move(song_id), start_step};
}

namespace {

bool meterSupported(const Song& song) {
  for (const auto& m : song.meters) {
    bool ok = m.denominator == 4 && (m.numerator == 2 || m.numerator == 4);
    if (!ok) return false;
  }
  return !song.meters.empty();
}

}  // namespace

SegmentationResult quantizeAndSegment(const Song& song, int hop_beats,
                                      const std::vector<std::string>& track_filter) {
  SegmentationResult result;
  if (!meterSupported(song)) {
    result.meter_ok = false;
    return result;
  }

  // Quantize the selected tracks onto one grid.
  std::vector<NoteEvent> grid_notes;
  int song_end_step = 0;
  for (const auto& track : song.tracks) {
    if (!track_filter.empty() &&
        std::find(track_filter.begin(), track_filter.end(), track.name) == track_filter.end()) {
      continue;
    }
    for (const auto& raw : track.notes) {
      int onset = quantizeToGrid(raw.onset_beats);
      int end = quantizeToGrid(raw.onset_beats + raw.duration_beats);
      int duration = std::max(1, end - onset);
      if (onset < 0 || raw.pitch < 0 || raw.pitch > 127) continue;
      grid_notes.push_back(NoteEvent{onset, raw.pitch, duration});
      song_end_step = std::max(song_end_step, onset + duration);
    }
  }
  std::sort(grid_notes.begin(), grid_notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });

  const int hop_steps = hop_beats * kStepsPerBeat;
  for (int w = 0; w + kSegmentSteps <= song_end_step; w += hop_steps) {
    std::vector<NoteEvent> window;
    for (const auto& n : grid_notes) {
      if (n.onset >= w && n.onset < w + kSegmentSteps) {
        window.push_back(NoteEvent{n.onset - w, n.pitch, n.duration});
      }
    }
    result.segments.push_back(makeSegment(std::move(window), song.id, w));
  }
  return result;
}

PianoRollDurationMatrix toMatrix(const Segment& seg) {
  PianoRollDurationMatrix m = PianoRollDurationMatrix::Zero(kNumPitches, kSegmentSteps);
  for (const auto& n : seg.notes) m(n.pitch, n.onset) = n.duration;
  return m;
}

Segment fromMatrix(const PianoRollDurationMatrix& m, std::string song_id, int start_step) {
  std::vector<NoteEvent> notes;
  for (int t = 0; t < kSegmentSteps; ++t)
    for (int p = 0; p < kNumPitches; ++p)
      if (m(p, t) > 0) notes.push_back(NoteEvent{t, p, m(p, t)});
  return makeSegment(std::move(notes), std::move(song_id), start_step);
}

Segment transpose(const Segment& seg, int semitones) {
  std::vector<NoteEvent> notes;
  for (const auto& n : seg.notes) {
    int p = n.pitch + semitones;
    if (p < 0 || p > 127) continue;
    notes.push_back(NoteEvent{n.onset, p, n.duration});
  }
  return makeSegment(std::move(notes), seg.song_id, seg.start_step);
}

Segment perturbPitch(const Segment& seg, double prob, Rng& rng) {
  int shift[kBeatsPerSegment] = {};
  for (int b = 0; b < kBeatsPerSegment; ++b) {
    if (rng.bernoulli(prob)) shift[b] = rng.coin() ? 1 : -1;
  }
  std::vector<NoteEvent> notes;
  for (const auto& n : seg.notes) {
    int p = n.pitch + shift[n.onset / kStepsPerBeat];
    if (p < 0 || p > 127) continue;
    notes.push_back(NoteEvent{n.onset, p, n.duration});
  }
  return makeSegment(std::move(notes), seg.song_id, seg.start_step);
}

Segment halveDurations(const Segment& seg, double prob, Rng& rng) {
  std::vector<NoteEvent> notes;
  for (const auto& n : seg.notes) {
    int d = rng.bernoulli(prob) ? std::max(1, n.duration / 2) : n.duration;
    notes.push_back(NoteEvent{n.onset, n.pitch, d});
  }
  return makeSegment(std::move(notes), seg.song_id, seg.start_step);
}

}  // namespace chordtex
