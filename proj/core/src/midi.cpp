#include "chordtex/midi.hpp"

#include "chordtex/error.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>

namespace chordtex {

namespace {

constexpr int kWriteTicksPerQuarter = 480;

class ByteReader {
 public:
  explicit ByteReader(std::vector<uint8_t> data) : data_(std::move(data)) {}

  size_t pos() const { return pos_; }
  size_t size() const { return data_.size(); }
  bool atEnd() const { return pos_ >= data_.size(); }

  uint8_t u8() {
    if (pos_ >= data_.size()) fail("unexpected end of file");
    return data_[pos_++];
  }
  uint8_t peek() const {
    if (pos_ >= data_.size()) fail("unexpected end of file");
    return data_[pos_];
  }
  uint16_t u16() { return static_cast<uint16_t>(u8() << 8 | u8()); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | u8();
    return v;
  }
  uint32_t varint() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      uint8_t b = u8();
      v = v << 7 | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    fail("variable-length quantity longer than 4 bytes");
    return 0;
  }
  void skip(size_t n) {
    if (pos_ + n > data_.size()) fail("unexpected end of file");
    pos_ += n;
  }
  std::string bytes(size_t n) {
    if (pos_ + n > data_.size()) fail("unexpected end of file");
    std::string s(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError("midi parse error at byte " + std::to_string(pos_) + ": " + msg);
  }

 private:
  std::vector<uint8_t> data_;
  size_t pos_ = 0;
};

struct TickNote {
  int64_t tick;
  int pitch;
  int64_t duration_ticks;
};

struct ParsedTrack {
  std::string name;
  std::vector<TickNote> notes;
};

struct MetaColl {
  std::vector<std::pair<int64_t, double>> tempos;       // (tick, bpm)
  std::vector<std::pair<int64_t, std::pair<int, int>>> meters;  // (tick, (num, den))
};

ParsedTrack parseTrack(ByteReader& r, MetaColl& meta) {
  if (r.bytes(4) != "MTrk") r.fail("expected MTrk chunk");
  uint32_t length = r.u32();
  size_t end = r.pos() + length;

  ParsedTrack track;
  int64_t tick = 0;
  uint8_t running_status = 0;
  // Active note-ons keyed by (channel, pitch); FIFO per key for overlaps.
  std::multimap<int, size_t> active;

  while (r.pos() < end) {
    tick += r.varint();
    uint8_t status = r.peek();
    if (status & 0x80) {
      r.u8();
      if (status < 0xF0) running_status = status;
    } else {
      if (!(running_status & 0x80)) r.fail("data byte without running status");
      status = running_status;
    }

    if (status == 0xFF) {
      uint8_t type = r.u8();
      uint32_t len = r.varint();
      if (type == 0x03) {
        track.name = r.bytes(len);
      } else if (type == 0x51 && len == 3) {
        uint32_t usec = 0;
        for (int i = 0; i < 3; ++i) usec = usec << 8 | r.u8();
        if (usec > 0) meta.tempos.emplace_back(tick, 60e6 / usec);
      } else if (type == 0x58 && len >= 2) {
        int num = r.u8();
        int den = 1 << r.u8();
        r.skip(len - 2);
        meta.meters.emplace_back(tick, std::make_pair(num, den));
      } else {
        r.skip(len);
      }
    } else if (status == 0xF0 || status == 0xF7) {
      r.skip(r.varint());
    } else {
      uint8_t kind = status & 0xF0;
      int channel = status & 0x0F;
      if (kind == 0x90 || kind == 0x80) {
        int pitch = r.u8() & 0x7F;
        int velocity = r.u8() & 0x7F;
        int key = channel << 8 | pitch;
        if (kind == 0x90 && velocity > 0) {
          track.notes.push_back(TickNote{tick, pitch, 0});
          active.emplace(key, track.notes.size() - 1);
        } else {
          auto it = active.find(key);
          if (it != active.end()) {
            track.notes[it->second].duration_ticks = tick - track.notes[it->second].tick;
            active.erase(it);
          }
        }
      } else if (kind == 0xC0 || kind == 0xD0) {
        r.u8();
      } else if (kind == 0xA0 || kind == 0xB0 || kind == 0xE0) {
        r.u8();
        r.u8();
      } else {
        r.fail("unknown status byte");
      }
    }
  }
  // Close notes left hanging at end of track.
  for (auto& [key, idx] : active) {
    track.notes[idx].duration_ticks = std::max<int64_t>(1, tick - track.notes[idx].tick);
  }
  return track;
}

}  // namespace

Song loadMidi(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open midi file: " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(std::move(data));

  if (r.bytes(4) != "MThd") r.fail("expected MThd chunk");
  if (r.u32() != 6) r.fail("bad MThd length");
  uint16_t format = r.u16();
  uint16_t ntracks = r.u16();
  uint16_t division = r.u16();
  if (format > 1) throw DataError("unsupported midi format " + std::to_string(format) +
                                  " (only format 0 and 1 are supported)");
  if (division & 0x8000) r.fail("SMPTE time division is not supported");
  if (division == 0) r.fail("zero time division");

  MetaColl meta;
  std::vector<ParsedTrack> tracks;
  for (int i = 0; i < ntracks; ++i) tracks.push_back(parseTrack(r, meta));

  Song song;
  song.id = std::filesystem::path(path).stem().string();
  const double tpq = division;
  int unnamed = 0;
  for (auto& t : tracks) {
    if (t.notes.empty()) continue;
    Track track;
    track.name = t.name.empty() ? "track_" + std::to_string(unnamed++) : t.name;
    for (const auto& n : t.notes) {
      track.notes.push_back(RawNote{n.tick / tpq, n.pitch, std::max<int64_t>(1, n.duration_ticks) / tpq});
    }
    std::sort(track.notes.begin(), track.notes.end(),
              [](const RawNote& a, const RawNote& b) { return a.onset_beats < b.onset_beats; });
    song.tracks.push_back(std::move(track));
  }
  if (song.tracks.empty()) throw DataError("midi file has no note content: " + path);

  std::sort(meta.tempos.begin(), meta.tempos.end());
  for (const auto& [tick, bpm] : meta.tempos) song.tempos.push_back(TempoEvent{tick / tpq, bpm});
  if (song.tempos.empty()) song.tempos.push_back(TempoEvent{0.0, 120.0});

  // Convert meter change ticks to bar indices, accumulating across changes.
  std::sort(meta.meters.begin(), meta.meters.end());
  if (meta.meters.empty()) meta.meters.emplace_back(0, std::make_pair(4, 4));
  double bar = 0.0;
  int64_t prev_tick = 0;
  double prev_beats_per_bar = 4.0;
  for (size_t i = 0; i < meta.meters.size(); ++i) {
    const auto& [tick, sig] = meta.meters[i];
    if (i > 0) bar += (tick - prev_tick) / tpq / prev_beats_per_bar;
    song.meters.push_back(MeterEvent{static_cast<int>(bar + 0.5), sig.first, sig.second});
    prev_tick = tick;
    prev_beats_per_bar = sig.first * 4.0 / sig.second;
  }
  return song;
}

namespace {

class TrackWriter {
 public:
  void event(int64_t tick, std::initializer_list<uint8_t> bytes) {
    delta(tick);
    data_.insert(data_.end(), bytes);
  }
  void meta(int64_t tick, uint8_t type, const std::string& payload) {
    delta(tick);
    data_.push_back(0xFF);
    data_.push_back(type);
    varint(payload.size());
    data_.insert(data_.end(), payload.begin(), payload.end());
  }
  std::vector<uint8_t> finish() {
    meta(last_tick_, 0x2F, "");
    std::vector<uint8_t> chunk = {'M', 'T', 'r', 'k'};
    uint32_t len = data_.size();
    for (int i = 3; i >= 0; --i) chunk.push_back(len >> (8 * i) & 0xFF);
    chunk.insert(chunk.end(), data_.begin(), data_.end());
    return chunk;
  }

 private:
  void delta(int64_t tick) {
    varint(static_cast<uint32_t>(tick - last_tick_));
    last_tick_ = tick;
  }
  void varint(uint32_t v) {
    uint8_t stack[5];
    int n = 0;
    do {
      stack[n++] = v & 0x7F;
      v >>= 7;
    } while (v);
    while (n > 1) data_.push_back(stack[--n] | 0x80);
    data_.push_back(stack[0]);
  }

  std::vector<uint8_t> data_;
  int64_t last_tick_ = 0;
};

struct WireNote {
  int64_t tick;
  int pitch;
  int64_t end_tick;
};

std::vector<uint8_t> noteTrackChunk(const std::string& name, std::vector<WireNote> notes) {
  // Emit as (tick, on/off) event pairs in time order.
  struct Ev {
    int64_t tick;
    bool on;
    int pitch;
  };
  std::vector<Ev> events;
  for (const auto& n : notes) {
    events.push_back(Ev{n.tick, true, n.pitch});
    events.push_back(Ev{n.end_tick, false, n.pitch});
  }
  std::sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.on != b.on) return !a.on;  // offs before ons at the same tick
    return a.pitch < b.pitch;
  });
  TrackWriter w;
  if (!name.empty()) w.meta(0, 0x03, name);
  for (const auto& e : events) {
    uint8_t status = e.on ? 0x90 : 0x80;
    w.event(e.tick, {status, static_cast<uint8_t>(e.pitch), static_cast<uint8_t>(e.on ? 80 : 0)});
  }
  return w.finish();
}

void writeSmf(const std::string& path, const std::vector<std::vector<uint8_t>>& chunks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write midi file: " + path);
  std::vector<uint8_t> header = {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 1};
  header.push_back(chunks.size() >> 8 & 0xFF);
  header.push_back(chunks.size() & 0xFF);
  header.push_back(kWriteTicksPerQuarter >> 8 & 0xFF);
  header.push_back(kWriteTicksPerQuarter & 0xFF);
  out.write(reinterpret_cast<const char*>(header.data()), header.size());
  for (const auto& c : chunks)
    out.write(reinterpret_cast<const char*>(c.data()), c.size());
  if (!out) throw DataError("failed writing midi file: " + path);
}

std::vector<uint8_t> conductorChunk(const std::vector<TempoEvent>& tempos,
                                    const std::vector<MeterEvent>& meters) {
  TrackWriter w;
  double beats_per_bar = 4.0;
  for (const auto& m : meters) {
    int den_pow = 0;
    while ((1 << den_pow) < m.denominator) ++den_pow;
    std::string payload;
    payload.push_back(static_cast<char>(m.numerator));
    payload.push_back(static_cast<char>(den_pow));
    payload.push_back(24);
    payload.push_back(8);
    // Bars before the first change are measured with the previous signature.
    int64_t tick = static_cast<int64_t>(m.bar * beats_per_bar * kWriteTicksPerQuarter);
    w.meta(tick, 0x58, payload);
    beats_per_bar = m.numerator * 4.0 / m.denominator;
  }
  for (const auto& t : tempos) {
    uint32_t usec = static_cast<uint32_t>(60e6 / t.bpm);
    std::string payload;
    for (int i = 2; i >= 0; --i) payload.push_back(static_cast<char>(usec >> (8 * i) & 0xFF));
    w.meta(static_cast<int64_t>(t.beat * kWriteTicksPerQuarter), 0x51, payload);
  }
  return w.finish();
}

}  // namespace

void writeMidi(const Song& song, const std::string& path) {
  std::vector<std::vector<uint8_t>> chunks;
  std::vector<TempoEvent> tempos = song.tempos;
  if (tempos.empty()) tempos.push_back(TempoEvent{0.0, 120.0});
  std::vector<MeterEvent> meters = song.meters;
  if (meters.empty()) meters.push_back(MeterEvent{0, 4, 4});
  chunks.push_back(conductorChunk(tempos, meters));
  for (const auto& track : song.tracks) {
    std::vector<WireNote> notes;
    for (const auto& n : track.notes) {
      int64_t tick = static_cast<int64_t>(n.onset_beats * kWriteTicksPerQuarter + 0.5);
      int64_t end = tick + std::max<int64_t>(
                               1, static_cast<int64_t>(n.duration_beats * kWriteTicksPerQuarter + 0.5));
      notes.push_back(WireNote{tick, n.pitch, end});
    }
    chunks.push_back(noteTrackChunk(track.name, std::move(notes)));
  }
  writeSmf(path, chunks);
}

void writeMidiSegments(const std::vector<std::pair<std::string, std::vector<Segment>>>& tracks,
                       const std::string& path, double bpm) {
  constexpr int kTicksPerStep = kWriteTicksPerQuarter / kStepsPerBeat;
  std::vector<std::vector<uint8_t>> chunks;
  chunks.push_back(conductorChunk({TempoEvent{0.0, bpm}}, {MeterEvent{0, 4, 4}}));
  for (const auto& [name, segments] : tracks) {
    std::vector<WireNote> notes;
    for (const auto& seg : segments) {
      for (const auto& n : seg.notes) {
        int64_t tick = static_cast<int64_t>(seg.start_step + n.onset) * kTicksPerStep;
        notes.push_back(WireNote{tick, n.pitch, tick + n.duration * kTicksPerStep});
      }
    }
    chunks.push_back(noteTrackChunk(name, std::move(notes)));
  }
  writeSmf(path, chunks);
}

}  // namespace chordtex
