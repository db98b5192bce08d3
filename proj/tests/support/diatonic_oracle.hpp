#pragma once

// Brute-force staff-position enumerator, written independently of the
// library's diatonic-index arithmetic: builds the letter-octave of all 62
// positions by literally walking the scale, names the pitch from a lookup
// table, and collects every position with a matching name.

#include <string>
#include <vector>

#include "bootleg/staff.hpp"

namespace fixtures {

struct LetterOctave {
    char letter;
    int octave;

    bool operator==(const LetterOctave&) const = default;
};

inline LetterOctave step_up(LetterOctave lo)
{
    static const std::string kOrder = "CDEFGAB";
    const auto i = kOrder.find(lo.letter);
    if (i + 1 == kOrder.size()) {
        return { 'C', lo.octave + 1 };
    }
    return { kOrder[i + 1], lo.octave };
}

/// Letter-octave of each of the 62 staff positions, walked up from LH A0
/// and RH E3.
inline std::vector<LetterOctave> staff_position_names()
{
    std::vector<LetterOctave> names;
    LetterOctave lh{ 'A', 0 };
    for (int i = 0; i < 28; ++i) {
        names.push_back(lh);
        lh = step_up(lh);
    }
    LetterOctave rh{ 'E', 3 };
    for (int i = 0; i < 34; ++i) {
        names.push_back(rh);
        rh = step_up(rh);
    }
    return names;
}

inline LetterOctave spell_pitch(int pitch, bootleg::AccidentalMode mode)
{
    static const char kSharpNames[12]
        = { 'C', 'C', 'D', 'D', 'E', 'F', 'F', 'G', 'G', 'A', 'A', 'B' };
    static const char kFlatNames[12]
        = { 'C', 'D', 'D', 'E', 'E', 'F', 'G', 'G', 'A', 'A', 'B', 'B' };
    const int pc = pitch % 12;
    const char letter
        = (mode == bootleg::AccidentalMode::Sharp) ? kSharpNames[pc] : kFlatNames[pc];
    return { letter, pitch / 12 - 1 };
}

/// All staff positions whose letter-octave equals the pitch's spelling.
inline std::vector<int> enumerate_positions(int pitch, bootleg::AccidentalMode mode)
{
    const auto names = staff_position_names();
    const auto want = spell_pitch(pitch, mode);
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(names.size()); ++i) {
        if (names[static_cast<std::size_t>(i)] == want) {
            out.push_back(i);
        }
    }
    return out;
}

} // namespace fixtures
