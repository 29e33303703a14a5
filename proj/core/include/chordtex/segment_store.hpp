#pragma once

#include "chordtex/note.hpp"

#include <string>
#include <utility>
#include <vector>

namespace chordtex {

// One song's segments, grouped by source track. This is the unit of the
// on-disk corpus: a directory of per-song records plus a manifest.
struct SongRecord {
  std::string song_id;
  std::vector<std::pair<std::string, std::vector<Segment>>> tracks;
};

// Binary per-song record, little-endian, versioned ("CTSEG001").
void writeSongRecord(const SongRecord& record, const std::string& path);
SongRecord readSongRecord(const std::string& path);

}  // namespace chordtex
