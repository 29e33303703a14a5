#pragma once

#include "chordtex/rng.hpp"
#include "chordtex/score_ir.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace chordtex::testing {

// Random but structurally valid segment: pop-piano-like density.
Segment randomSegment(Rng& rng, int max_notes = 24, int min_pitch = 30, int max_pitch = 100);

std::vector<Segment> randomSegments(uint64_t seed, int count);

// Scratch directory under the build tree, wiped on construction.
class TempDir {
 public:
  explicit TempDir(const std::string& name);
  ~TempDir();
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace chordtex::testing
