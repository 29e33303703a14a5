#include "chordtex/segment_store.hpp"

#include "chordtex/error.hpp"

#include <cstdint>
#include <fstream>

namespace chordtex {

namespace {

constexpr char kMagic[9] = "CTSEG001";

void putU32(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
               static_cast<char>(v >> 24)};
  out.write(b, 4);
}

uint32_t getU32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return b[0] | b[1] << 8 | b[2] << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void putString(std::ostream& out, const std::string& s) {
  putU32(out, s.size());
  out.write(s.data(), s.size());
}

std::string getString(std::istream& in) {
  uint32_t n = getU32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void writeSongRecord(const SongRecord& record, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write song record: " + path);
  out.write(kMagic, 8);
  putU32(out, 1);  // format version
  putString(out, record.song_id);
  putU32(out, record.tracks.size());
  for (const auto& [name, segments] : record.tracks) {
    putString(out, name);
    putU32(out, segments.size());
    for (const auto& seg : segments) {
      putU32(out, seg.start_step);
      putU32(out, seg.notes.size());
      for (const auto& n : seg.notes) {
        char b[3] = {static_cast<char>(n.onset), static_cast<char>(n.pitch),
                     static_cast<char>(n.duration)};
        out.write(b, 3);
      }
    }
  }
  if (!out) throw DataError("failed writing song record: " + path);
}

SongRecord readSongRecord(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open song record: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kMagic)
    throw DataError("not a song record (bad magic): " + path);
  uint32_t version = getU32(in);
  if (version != 1)
    throw DataError("unsupported song record version " + std::to_string(version) + ": " + path);

  SongRecord record;
  record.song_id = getString(in);
  uint32_t ntracks = getU32(in);
  for (uint32_t t = 0; t < ntracks; ++t) {
    std::string name = getString(in);
    uint32_t nsegs = getU32(in);
    std::vector<Segment> segments;
    segments.reserve(nsegs);
    for (uint32_t s = 0; s < nsegs; ++s) {
      Segment seg;
      seg.song_id = record.song_id;
      seg.start_step = getU32(in);
      uint32_t nnotes = getU32(in);
      seg.notes.reserve(nnotes);
      for (uint32_t i = 0; i < nnotes; ++i) {
        unsigned char b[3];
        in.read(reinterpret_cast<char*>(b), 3);
        seg.notes.push_back(NoteEvent{b[0], b[1], b[2]});
      }
      segments.push_back(std::move(seg));
    }
    record.tracks.emplace_back(std::move(name), std::move(segments));
  }
  if (!in) throw DataError("truncated song record: " + path);
  return record;
}

}  // namespace chordtex
