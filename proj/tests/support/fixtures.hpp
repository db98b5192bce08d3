#pragma once

// Shared test fixtures: random bootleg scores, synthetic corpora and a
// minimal standard-MIDI-file builder.

#include <cstdint>
#include <string>
#include <vector>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/index_core.hpp"
#include "bootleg/midi_features.hpp"
#include "bootleg/rng.hpp"

namespace fixtures {

/// Random nonzero 62-bit column with 1..max_bits set bits.
inline std::uint64_t random_column(bootleg::Rng& rng, int max_bits = 5)
{
    const int n_bits = static_cast<int>(rng.range(1, max_bits));
    std::uint64_t column = 0;
    for (int i = 0; i < n_bits; ++i) {
        column |= std::uint64_t{1} << rng.below(bootleg::kNumStaffPositions);
    }
    return column;
}

inline bootleg::BootlegScore random_score(bootleg::Rng& rng, std::size_t width,
                                          bootleg::Variant variant = bootleg::Variant::SheetDerived,
                                          int max_bits = 5)
{
    bootleg::BootlegScore score(variant);
    for (std::size_t i = 0; i < width; ++i) {
        score.append(bootleg::Fingerprint(random_column(rng, max_bits)));
    }
    return score;
}

inline std::vector<bootleg::IndexedPiece> random_db(bootleg::Rng& rng, std::size_t n_pieces,
                                                    std::size_t min_width, std::size_t max_width,
                                                    int max_bits = 5)
{
    std::vector<bootleg::IndexedPiece> db;
    db.reserve(n_pieces);
    for (std::size_t p = 0; p < n_pieces; ++p) {
        const auto width = static_cast<std::size_t>(
            rng.range(static_cast<std::int64_t>(min_width), static_cast<std::int64_t>(max_width)));
        db.push_back({ "piece" + std::to_string(p),
                       random_score(rng, width, bootleg::Variant::SheetDerived, max_bits) });
    }
    return db;
}

/// Query pair whose two variants are identical; convenient when variant
/// disagreement is not what the test is about.
inline bootleg::QueryBootlegPair as_pair(const bootleg::BootlegScore& score)
{
    bootleg::BootlegScore sharp(bootleg::Variant::Sharp, score.columns());
    bootleg::BootlegScore flat(bootleg::Variant::Flat, score.columns());
    return bootleg::QueryBootlegPair(std::move(sharp), std::move(flat));
}

// ---- minimal SMF builder ----

struct MidiEventSpec {
    std::uint32_t delta = 0;
    std::vector<std::uint8_t> bytes; // status + data, or meta payload
};

class MidiBuilder {
public:
    explicit MidiBuilder(int ppq = 480, std::uint16_t format = 0)
        : ppq_(ppq)
        , format_(format)
    {
        tracks_.emplace_back();
    }

    MidiBuilder& new_track()
    {
        tracks_.emplace_back();
        return *this;
    }

    MidiBuilder& note_on(std::uint32_t delta, int pitch, int velocity, int channel = 0)
    {
        event(delta, { static_cast<std::uint8_t>(0x90 | channel),
                       static_cast<std::uint8_t>(pitch), static_cast<std::uint8_t>(velocity) });
        return *this;
    }

    MidiBuilder& note_off(std::uint32_t delta, int pitch, int channel = 0)
    {
        event(delta, { static_cast<std::uint8_t>(0x80 | channel),
                       static_cast<std::uint8_t>(pitch), 0x40 });
        return *this;
    }

    MidiBuilder& tempo(std::uint32_t delta, std::uint32_t us_per_quarter)
    {
        event(delta,
              { 0xFF, 0x51, 0x03, static_cast<std::uint8_t>(us_per_quarter >> 16),
                static_cast<std::uint8_t>(us_per_quarter >> 8),
                static_cast<std::uint8_t>(us_per_quarter) });
        return *this;
    }

    MidiBuilder& raw_event(std::uint32_t delta, std::vector<std::uint8_t> bytes)
    {
        event(delta, std::move(bytes));
        return *this;
    }

    std::vector<std::uint8_t> bytes() const
    {
        std::vector<std::uint8_t> out;
        auto u32 = [&out](std::uint32_t v) {
            for (int i = 3; i >= 0; --i) {
                out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
            }
        };
        auto u16 = [&out](std::uint16_t v) {
            out.push_back(static_cast<std::uint8_t>(v >> 8));
            out.push_back(static_cast<std::uint8_t>(v));
        };
        u32(0x4D546864); // MThd
        u32(6);
        u16(format_);
        u16(static_cast<std::uint16_t>(tracks_.size()));
        u16(static_cast<std::uint16_t>(ppq_));
        for (const auto& track : tracks_) {
            std::vector<std::uint8_t> body;
            for (const auto& e : track) {
                append_vlq(body, e.delta);
                body.insert(body.end(), e.bytes.begin(), e.bytes.end());
            }
            // end of track
            append_vlq(body, 0);
            body.insert(body.end(), { 0xFF, 0x2F, 0x00 });
            u32(0x4D54726B); // MTrk
            u32(static_cast<std::uint32_t>(body.size()));
            out.insert(out.end(), body.begin(), body.end());
        }
        return out;
    }

private:
    void event(std::uint32_t delta, std::vector<std::uint8_t> bytes)
    {
        tracks_.back().push_back({ delta, std::move(bytes) });
    }

    static void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t v)
    {
        std::uint8_t stack[4];
        int n = 0;
        do {
            stack[n++] = static_cast<std::uint8_t>(v & 0x7F);
            v >>= 7;
        } while (v != 0);
        while (n > 1) {
            out.push_back(static_cast<std::uint8_t>(stack[--n] | 0x80));
        }
        out.push_back(stack[0]);
    }

    int ppq_;
    std::uint16_t format_;
    std::vector<std::vector<MidiEventSpec>> tracks_;
};

} // namespace fixtures
