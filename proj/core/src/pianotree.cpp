#include "chordtex/pianotree.hpp"

#include "chordtex/score_ir.hpp"

namespace chordtex {

std::array<int, kDurationBits> durationToBits(int duration) {
  std::array<int, kDurationBits> bits{};
  int v = duration - 1;
  for (int i = 0; i < kDurationBits; ++i) bits[i] = v >> (kDurationBits - 1 - i) & 1;
  return bits;
}

int durationFromBits(const std::array<int, kDurationBits>& bits) {
  int v = 0;
  for (int b : bits) v = v << 1 | (b ? 1 : 0);
  return v + 1;
}

PianoTree pianoTreeFromSegment(const Segment& seg) {
  PianoTree tree;
  for (const auto& n : seg.notes) {
    auto& frame = tree.frames[n.onset];
    if (static_cast<int>(frame.size()) < kMaxNotesPerFrame)
      frame.push_back(PianoTreeNote{n.pitch, n.duration});
  }
  return tree;  // segment notes are (onset, pitch)-sorted, so frames ascend
}

Segment segmentFromPianoTree(const PianoTree& tree, std::string song_id, int start_step) {
  std::vector<NoteEvent> notes;
  for (int f = 0; f < kSegmentSteps; ++f)
    for (const auto& n : tree.frames[f]) notes.push_back(NoteEvent{f, n.pitch, n.duration});
  return makeSegment(std::move(notes), std::move(song_id), start_step);
}

}  // namespace chordtex
