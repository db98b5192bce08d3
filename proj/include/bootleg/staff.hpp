#pragma once

#include <cstdint>
#include <string>

#include "bootleg/errors.hpp"

namespace bootleg {

// The feature axis has 62 vertical grand-staff positions: indices 0..27 are
// the left hand (A0 up to G4) and 28..61 are the right hand (E3 up to C8).
// Each index is one diatonic step (line or space, ledger positions
// included). E3..G4 exists in both hands; letter-equal positions there are
// exactly kMirrorGap indices apart.
inline constexpr int kNumStaffPositions = 62;
inline constexpr int kLeftHandPositions = 28;
inline constexpr int kRightHandPositions = 34;
inline constexpr int kMirrorGap = 10;

inline constexpr int kPianoLowestPitch = 21;  // A0
inline constexpr int kPianoHighestPitch = 108; // C8

// Diatonic index: octave * 7 + letter, letters numbered C=0 .. B=6 per
// scientific pitch notation (octave increments at C).
inline constexpr int kLhLowDiatonic = 5;   // A0
inline constexpr int kLhHighDiatonic = 32; // G4
inline constexpr int kRhLowDiatonic = 23;  // E3
inline constexpr int kRhHighDiatonic = 56; // C8

// Middle lines of the two staves, as diatonic indices: B4 for the treble
// staff, D3 for the bass staff.
inline constexpr int kTrebleMiddleLineDiatonic = 34;
inline constexpr int kBassMiddleLineDiatonic = 22;

enum class AccidentalMode { Sharp, Flat };

enum class Hand { Left, Right };

/// One of the 62 vertical grand-staff positions.
struct StaffPosition {
    std::uint8_t index;

    friend bool operator==(StaffPosition, StaffPosition) = default;
    friend auto operator<=>(StaffPosition, StaffPosition) = default;
};

inline bool is_left_hand(StaffPosition p) { return p.index < kLeftHandPositions; }

inline int diatonic_of_position(StaffPosition p)
{
    return is_left_hand(p) ? p.index + kLhLowDiatonic : p.index - kLeftHandPositions + kRhLowDiatonic;
}

/// Left-hand staff position for a diatonic index, or -1 if out of range.
inline int lh_position_of_diatonic(int d)
{
    return (d >= kLhLowDiatonic && d <= kLhHighDiatonic) ? d - kLhLowDiatonic : -1;
}

/// Right-hand staff position for a diatonic index, or -1 if out of range.
inline int rh_position_of_diatonic(int d)
{
    return (d >= kRhLowDiatonic && d <= kRhHighDiatonic)
        ? d - kRhLowDiatonic + kLeftHandPositions
        : -1;
}

inline bool in_middle_register(int diatonic)
{
    return diatonic >= kRhLowDiatonic && diatonic <= kLhHighDiatonic;
}

/// Human-readable name like "LH C4" or "RH B4"; used in diagnostics and
/// overlay labels.
inline std::string position_name(StaffPosition p)
{
    static constexpr char kLetters[7] = { 'C', 'D', 'E', 'F', 'G', 'A', 'B' };
    const int d = diatonic_of_position(p);
    std::string s = is_left_hand(p) ? "LH " : "RH ";
    s += kLetters[d % 7];
    s += std::to_string(d / 7);
    return s;
}

/// Letter-octave (diatonic index) a pitch is spelled at under the given
/// accidental convention. Black keys take the letter below in Sharp mode
/// and the letter above in Flat mode; the octave never changes.
inline int pitch_diatonic(int pitch, AccidentalMode mode)
{
    if (pitch < 0 || pitch > 127) {
        throw Error("MIDI pitch out of range: " + std::to_string(pitch));
    }
    static constexpr int kSharpLetter[12] = { 0, 0, 1, 1, 2, 3, 3, 4, 4, 5, 5, 6 };
    static constexpr int kFlatLetter[12] = { 0, 1, 1, 2, 2, 3, 4, 4, 5, 5, 6, 6 };
    const int pc = pitch % 12;
    const int octave = pitch / 12 - 1;
    const int letter = (mode == AccidentalMode::Sharp) ? kSharpLetter[pc] : kFlatLetter[pc];
    return octave * 7 + letter;
}

/// Mirrors middle-register bits of a packed 62-bit column into both hands:
/// every set bit whose letter-octave lies in E3..G4 gains its letter-equal
/// twin in the other hand.
inline std::uint64_t mirror_middle_register(std::uint64_t column)
{
    std::uint64_t out = column;
    for (int d = kRhLowDiatonic; d <= kLhHighDiatonic; ++d) {
        const int lh = d - kLhLowDiatonic;
        const int rh = lh + kMirrorGap;
        const std::uint64_t lh_bit = std::uint64_t{1} << lh;
        const std::uint64_t rh_bit = std::uint64_t{1} << rh;
        if (out & (lh_bit | rh_bit)) {
            out |= lh_bit | rh_bit;
        }
    }
    return out;
}

} // namespace bootleg
