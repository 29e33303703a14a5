#include "support/test_util.hpp"

namespace chordtex::testing {

Segment randomSegment(Rng& rng, int max_notes, int min_pitch, int max_pitch) {
  int n = 1 + static_cast<int>(rng.below(max_notes));
  std::vector<NoteEvent> notes;
  for (int i = 0; i < n; ++i) {
    int onset = static_cast<int>(rng.below(kSegmentSteps));
    int pitch = min_pitch + static_cast<int>(rng.below(max_pitch - min_pitch + 1));
    int duration = 1 + static_cast<int>(rng.below(8));
    notes.push_back(NoteEvent{onset, pitch, duration});
  }
  return makeSegment(std::move(notes), "rand", 0);
}

std::vector<Segment> randomSegments(uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<Segment> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(randomSegment(rng));
  return out;
}

TempDir::TempDir(const std::string& name) {
  path_ = std::filesystem::temp_directory_path() / ("chordtex_test_" + name);
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() { std::filesystem::remove_all(path_); }

}  // namespace chordtex::testing
