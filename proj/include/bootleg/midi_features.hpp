#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/staff.hpp"

namespace bootleg {

/// Default chord-asynchrony tolerance for note-event grouping, in seconds.
inline constexpr double kDefaultSimultaneityTolerance = 0.05;

struct NoteOnset {
    int pitch = 0;           // MIDI note number, 0..127
    double onset_time = 0.0; // seconds

    friend bool operator==(const NoteOnset&, const NoteOnset&) = default;
};

/// A group of (near-)simultaneous onsets sharing one event time.
struct NoteEvent {
    double event_time = 0.0;
    std::vector<int> pitches; // sorted, deduplicated, non-empty

    friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

struct MidiParseStats {
    std::size_t note_on_count = 0;      // velocity > 0, after percussion filter
    std::size_t percussion_skipped = 0; // channel-10 note-ons, filtered out
    std::size_t track_count = 0;
};

struct ProjectionStats {
    std::size_t dropped_pitches = 0; // outside the piano range 21..108
    std::size_t dropped_events = 0;  // events with no in-range pitch at all
};

namespace detail {

    class MidiReader {
    public:
        MidiReader(const std::uint8_t* data, std::size_t size)
            : data_(data)
            , size_(size)
        {
        }

        std::size_t pos() const { return pos_; }
        std::size_t remaining() const { return size_ - pos_; }

        std::uint8_t peek() const
        {
            need(1);
            return data_[pos_];
        }

        std::uint8_t u8()
        {
            need(1);
            return data_[pos_++];
        }

        std::uint16_t u16()
        {
            need(2);
            const auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
            pos_ += 2;
            return v;
        }

        std::uint32_t u32()
        {
            need(4);
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) {
                v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
            }
            pos_ += 4;
            return v;
        }

        std::uint32_t vlq()
        {
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) {
                const std::uint8_t b = u8();
                v = (v << 7) | (b & 0x7F);
                if (!(b & 0x80)) {
                    return v;
                }
            }
            throw ParseError("variable-length quantity longer than 4 bytes", pos_);
        }

        void skip(std::size_t n)
        {
            need(n);
            pos_ += n;
        }

        void seek(std::size_t abs)
        {
            pos_ = abs;
        }

        void need(std::size_t n) const
        {
            if (n > remaining()) {
                throw ParseError("truncated data: need " + std::to_string(n) + " more bytes", pos_);
            }
        }

    private:
        const std::uint8_t* data_;
        std::size_t size_;
        std::size_t pos_ = 0;
    };

    struct TempoChange {
        std::int64_t tick;
        std::uint32_t us_per_quarter;
    };

    struct RawNoteOn {
        std::int64_t tick;
        std::uint8_t pitch;
    };

    /// Piecewise tick -> seconds conversion over a merged, sorted tempo map.
    class TempoMap {
    public:
        TempoMap(std::vector<TempoChange> changes, int ppq)
            : ppq_(ppq)
        {
            std::stable_sort(changes.begin(), changes.end(),
                             [](const TempoChange& a, const TempoChange& b) {
                                 return a.tick < b.tick;
                             });
            segments_.push_back({ 0, 0.0, 500000 }); // 120 BPM until told otherwise
            for (const auto& c : changes) {
                auto& last = segments_.back();
                if (c.tick <= last.tick) {
                    last.us_per_quarter = c.us_per_quarter; // same tick: later event wins
                    continue;
                }
                const double sec
                    = last.seconds + ticks_to_sec(c.tick - last.tick, last.us_per_quarter);
                segments_.push_back({ c.tick, sec, c.us_per_quarter });
            }
        }

        double seconds_at(std::int64_t tick) const
        {
            auto it = std::upper_bound(segments_.begin(), segments_.end(), tick,
                                       [](std::int64_t t, const Segment& s) { return t < s.tick; });
            const Segment& seg = *std::prev(it);
            return seg.seconds + ticks_to_sec(tick - seg.tick, seg.us_per_quarter);
        }

    private:
        struct Segment {
            std::int64_t tick;
            double seconds;
            std::uint32_t us_per_quarter;
        };

        double ticks_to_sec(std::int64_t dticks, std::uint32_t us_per_quarter) const
        {
            return static_cast<double>(dticks) * static_cast<double>(us_per_quarter)
                / (static_cast<double>(ppq_) * 1e6);
        }

        std::vector<Segment> segments_;
        int ppq_;
    };

} // namespace detail

/// Parses a standard MIDI file (format 0 or 1) into note onsets sorted by
/// (time, pitch). Only note-ons with velocity > 0 count (velocity 0 is a
/// note-off by convention); channel-10 percussion is filtered out; ticks
/// are converted to seconds through the merged set-tempo map, defaulting
/// to 120 BPM when no tempo event precedes a note.
inline std::vector<NoteOnset> parse_midi(std::span<const std::uint8_t> bytes,
                                         MidiParseStats* stats = nullptr)
{
    detail::MidiReader r(bytes.data(), bytes.size());

    if (r.remaining() < 14) {
        throw ParseError("not a MIDI file: too short for header", 0);
    }
    if (r.u32() != 0x4D546864u) { // "MThd"
        throw ParseError("not a MIDI file: missing MThd", 0);
    }
    const auto header_len = r.u32();
    if (header_len < 6) {
        throw ParseError("malformed MThd length", r.pos());
    }
    const auto format = r.u16();
    const auto declared_tracks = r.u16();
    const auto division = r.u16();
    r.skip(header_len - 6);

    if (format == 2) {
        throw UnsupportedFormatError("MIDI format 2 files are not supported");
    }
    if (format > 2) {
        throw ParseError("unknown MIDI format " + std::to_string(format), 8);
    }

    const bool smpte = (division & 0x8000) != 0;
    double sec_per_tick_smpte = 0.0;
    int ppq = 0;
    if (smpte) {
        const int fps = 256 - ((division >> 8) & 0xFF);
        const int tpf = division & 0xFF;
        if (fps <= 0 || tpf == 0) {
            throw ParseError("invalid SMPTE division", 12);
        }
        sec_per_tick_smpte = 1.0 / (static_cast<double>(fps) * tpf);
    } else {
        ppq = division;
        if (ppq == 0) {
            throw ParseError("zero ticks-per-quarter division", 12);
        }
    }

    std::vector<detail::RawNoteOn> raw_notes;
    std::vector<detail::TempoChange> tempo_changes;
    MidiParseStats local;

    for (std::size_t t = 0; t < declared_tracks; ++t) {
        if (r.remaining() == 0) {
            throw ParseError("file ends after " + std::to_string(t) + " of "
                                 + std::to_string(declared_tracks) + " declared tracks",
                             r.pos());
        }
        if (r.u32() != 0x4D54726Bu) { // "MTrk"
            throw ParseError("expected MTrk chunk", r.pos() - 4);
        }
        const auto track_len = r.u32();
        r.need(track_len);
        const std::size_t track_end = r.pos() + track_len;

        std::int64_t tick = 0;
        std::uint8_t running_status = 0;
        bool ended = false;
        while (r.pos() < track_end) {
            tick += r.vlq();
            std::uint8_t status = r.peek();
            if (status >= 0x80) {
                r.skip(1);
                if (status < 0xF0) {
                    running_status = status;
                }
            } else {
                if (running_status == 0) {
                    throw ParseError("data byte with no running status", r.pos());
                }
                status = running_status;
            }

            if (status == 0xFF) { // meta event
                const auto type = r.u8();
                const auto len = r.vlq();
                if (type == 0x2F) {
                    r.skip(len);
                    ended = true;
                    break;
                }
                if (type == 0x51) {
                    if (len != 3) {
                        throw ParseError("set-tempo event with bad length", r.pos());
                    }
                    std::uint32_t uspq = 0;
                    for (int i = 0; i < 3; ++i) {
                        uspq = (uspq << 8) | r.u8();
                    }
                    if (uspq == 0) {
                        throw ParseError("set-tempo event with zero tempo", r.pos());
                    }
                    tempo_changes.push_back({ tick, uspq });
                } else {
                    r.skip(len);
                }
                running_status = 0;
            } else if (status == 0xF0 || status == 0xF7) { // sysex
                const auto len = r.vlq();
                r.skip(len);
                running_status = 0;
            } else if ((status & 0xF0) == 0xF0) {
                throw ParseError("unexpected system message status byte", r.pos());
            } else {
                const int kind = status & 0xF0;
                const int channel = status & 0x0F;
                const int n_data = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
                const std::uint8_t d0 = r.u8();
                const std::uint8_t d1 = (n_data == 2) ? r.u8() : 0;
                if (kind == 0x90 && d1 > 0) {
                    if (channel == 9) {
                        ++local.percussion_skipped;
                    } else {
                        raw_notes.push_back({ tick, static_cast<std::uint8_t>(d0 & 0x7F) });
                        ++local.note_on_count;
                    }
                }
            }
            if (r.pos() > track_end) {
                throw ParseError("event overruns declared track length", r.pos());
            }
        }
        if (!ended && r.pos() != track_end) {
            throw ParseError("track data ends without end-of-track meta event", r.pos());
        }
        r.seek(track_end);
        ++local.track_count;
    }

    std::vector<NoteOnset> onsets;
    onsets.reserve(raw_notes.size());
    if (smpte) {
        for (const auto& n : raw_notes) {
            onsets.push_back({ n.pitch, static_cast<double>(n.tick) * sec_per_tick_smpte });
        }
    } else {
        detail::TempoMap tempo_map(std::move(tempo_changes), ppq);
        for (const auto& n : raw_notes) {
            onsets.push_back({ n.pitch, tempo_map.seconds_at(n.tick) });
        }
    }
    std::sort(onsets.begin(), onsets.end(), [](const NoteOnset& a, const NoteOnset& b) {
        if (a.onset_time != b.onset_time) {
            return a.onset_time < b.onset_time;
        }
        return a.pitch < b.pitch;
    });

    if (stats) {
        *stats = local;
    }
    return onsets;
}

/// Greedy left-to-right grouping of sorted onsets into note events: an
/// onset joins the current event iff its time is within `tolerance` of the
/// event's FIRST onset. Duplicate pitches within an event collapse.
inline std::vector<NoteEvent> group_note_events(std::span<const NoteOnset> onsets,
                                                double tolerance = kDefaultSimultaneityTolerance)
{
    std::vector<NoteEvent> events;
    for (const auto& onset : onsets) {
        if (events.empty() || onset.onset_time - events.back().event_time > tolerance) {
            events.push_back({ onset.onset_time, { onset.pitch } });
        } else {
            events.back().pitches.push_back(onset.pitch);
        }
    }
    for (auto& e : events) {
        std::sort(e.pitches.begin(), e.pitches.end());
        e.pitches.erase(std::unique(e.pitches.begin(), e.pitches.end()), e.pitches.end());
    }
    return events;
}

/// Staff positions a pitch projects to under the given accidental
/// convention: the matching letter-octave slot in each hand whose range
/// contains it. Middle-register letter-octaves (E3..G4) land in both
/// hands; outside the overlap exactly one hand matches.
inline std::vector<StaffPosition> project_pitch(int pitch, AccidentalMode mode)
{
    if (pitch < kPianoLowestPitch || pitch > kPianoHighestPitch) {
        throw Error("pitch " + std::to_string(pitch) + " outside piano range 21..108");
    }
    const int d = pitch_diatonic(pitch, mode);
    std::vector<StaffPosition> out;
    if (const int lh = lh_position_of_diatonic(d); lh >= 0) {
        out.push_back({ static_cast<std::uint8_t>(lh) });
    }
    if (const int rh = rh_position_of_diatonic(d); rh >= 0) {
        out.push_back({ static_cast<std::uint8_t>(rh) });
    }
    return out;
}

/// Projects note events onto a bootleg score: one column per event, the
/// union of project_pitch over the event's pitches. Pitches outside the
/// piano range are dropped (counted in stats); events left with no pitch
/// produce no column.
inline BootlegScore midi_to_bootleg(std::span<const NoteEvent> events, AccidentalMode mode,
                                    ProjectionStats* stats = nullptr)
{
    BootlegScore score(mode == AccidentalMode::Sharp ? Variant::Sharp : Variant::Flat);
    ProjectionStats local;
    for (const auto& event : events) {
        std::uint64_t column = 0;
        for (const int pitch : event.pitches) {
            if (pitch < kPianoLowestPitch || pitch > kPianoHighestPitch) {
                ++local.dropped_pitches;
                continue;
            }
            for (const auto pos : project_pitch(pitch, mode)) {
                column |= std::uint64_t{1} << pos.index;
            }
        }
        if (column == 0) {
            ++local.dropped_events;
            continue;
        }
        score.append(Fingerprint(column));
    }
    if (stats) {
        stats->dropped_pitches += local.dropped_pitches;
        stats->dropped_events += local.dropped_events;
    }
    return score;
}

/// Sharp- and flat-variant bootleg scores extracted from the same MIDI
/// event sequence. Always equal widths.
struct QueryBootlegPair {
    BootlegScore sharp;
    BootlegScore flat;

    QueryBootlegPair(BootlegScore sharp_score, BootlegScore flat_score)
        : sharp(std::move(sharp_score))
        , flat(std::move(flat_score))
    {
        if (sharp.width() != flat.width()) {
            throw Error("sharp/flat bootleg widths differ");
        }
    }

    std::size_t width() const { return sharp.width(); }
};

inline QueryBootlegPair midi_bootleg_pair(std::span<const NoteEvent> events,
                                          ProjectionStats* stats = nullptr)
{
    auto sharp = midi_to_bootleg(events, AccidentalMode::Sharp, stats);
    auto flat = midi_to_bootleg(events, AccidentalMode::Flat, nullptr);
    return QueryBootlegPair(std::move(sharp), std::move(flat));
}

} // namespace bootleg
