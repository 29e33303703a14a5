#pragma once

#include "chordtex/note.hpp"

#include <string>
#include <utility>
#include <vector>

namespace chordtex {

// Reads a Standard MIDI File (format 0 or 1). Throws DataError on malformed
// input (message names the byte offset), on format-2 files, and on files
// without any note content.
Song loadMidi(const std::string& path);

// Writes a Song as a format-1 SMF: one conductor track (tempo + meter)
// followed by one track per note track.
void writeMidi(const Song& song, const std::string& path);

// Writes named tracks of segments. Each segment's notes are placed at
// start_step within the track's timeline, so consecutive 8-beat units can be
// exported as one continuous piece.
void writeMidiSegments(const std::vector<std::pair<std::string, std::vector<Segment>>>& tracks,
                       const std::string& path, double bpm = 120.0);

}  // namespace chordtex
