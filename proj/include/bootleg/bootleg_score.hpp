#pragma once

#include <algorithm>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bootleg/errors.hpp"
#include "bootleg/io_util.hpp"
#include "bootleg/staff.hpp"

namespace bootleg {

inline constexpr std::uint64_t kFingerprintMask = (std::uint64_t{1} << kNumStaffPositions) - 1;

using Column = std::bitset<kNumStaffPositions>;

/// One bootleg column packed into a 64-bit integer. Bit i corresponds to
/// staff position i (LH A0 = least-significant bit). Only nonzero values
/// below 2^62 are representable.
class Fingerprint {
public:
    explicit Fingerprint(std::uint64_t value)
        : value_(value)
    {
        if (value == 0) {
            throw Error("zero column cannot be a fingerprint");
        }
        if (value > kFingerprintMask) {
            throw Error("invalid fingerprint: value exceeds 62 bits");
        }
    }

    std::uint64_t value() const { return value_; }

    friend bool operator==(Fingerprint, Fingerprint) = default;
    friend auto operator<=>(Fingerprint, Fingerprint) = default;

private:
    std::uint64_t value_;
};

inline Fingerprint pack_column(const Column& column)
{
    return Fingerprint(column.to_ullong());
}

inline Column unpack_fingerprint(Fingerprint fp)
{
    return Column(fp.value());
}

enum class Variant : std::uint8_t { Sharp = 0, Flat = 1, SheetDerived = 2 };

inline const char* variant_name(Variant v)
{
    switch (v) {
    case Variant::Sharp:
        return "sharp";
    case Variant::Flat:
        return "flat";
    case Variant::SheetDerived:
        return "sheet";
    }
    return "?";
}

/// A 62 x N binary feature matrix stored column-wise as packed
/// fingerprints. Every column has at least one set bit; producers drop
/// empty columns at construction.
class BootlegScore {
public:
    explicit BootlegScore(Variant variant)
        : variant_(variant)
    {
    }

    BootlegScore(Variant variant, std::vector<Fingerprint> columns)
        : columns_(std::move(columns))
        , variant_(variant)
    {
    }

    Variant variant() const { return variant_; }
    std::size_t width() const { return columns_.size(); }
    bool empty() const { return columns_.empty(); }

    const std::vector<Fingerprint>& columns() const { return columns_; }
    Fingerprint column(std::size_t i) const { return columns_[i]; }

    void append(Fingerprint fp) { columns_.push_back(fp); }

    void append(const BootlegScore& other)
    {
        columns_.insert(columns_.end(), other.columns_.begin(), other.columns_.end());
    }

    BootlegScore slice(std::size_t start, std::size_t length) const
    {
        BootlegScore out(variant_);
        out.columns_.assign(columns_.begin() + static_cast<std::ptrdiff_t>(start),
                            columns_.begin() + static_cast<std::ptrdiff_t>(start + length));
        return out;
    }

    friend bool operator==(const BootlegScore&, const BootlegScore&) = default;

private:
    std::vector<Fingerprint> columns_;
    Variant variant_;
};

// -------- bootleg score file format --------
//
// Little-endian layout:
//   magic "BTLGSCR\0" | u32 version | u8 variant | string source | u64 width
//   | width x u64 fingerprint | u32 crc32 (over everything before it)

inline constexpr char kBootlegFileMagic[8] = { 'B', 'T', 'L', 'G', 'S', 'C', 'R', '\0' };
inline constexpr std::uint32_t kBootlegFileVersion = 1;

inline void save_bootleg(const BootlegScore& score, const std::filesystem::path& path,
                         const std::string& source = "")
{
    ByteWriter w;
    w.raw(kBootlegFileMagic, sizeof(kBootlegFileMagic));
    w.u32(kBootlegFileVersion);
    w.u8(static_cast<std::uint8_t>(score.variant()));
    w.str(source);
    w.u64(score.width());
    for (const auto fp : score.columns()) {
        w.u64(fp.value());
    }
    atomic_write_with_crc(path, w.bytes());
}

struct LoadedBootleg {
    BootlegScore score;
    std::string source;
};

inline LoadedBootleg load_bootleg(const std::filesystem::path& path)
{
    const auto payload = read_file_with_crc(path);
    ByteReader r(payload.data(), payload.size());
    const auto* magic = r.take(sizeof(kBootlegFileMagic));
    if (!std::equal(magic, magic + sizeof(kBootlegFileMagic), kBootlegFileMagic)) {
        throw LoadError("bad magic bytes in " + path.string());
    }
    const auto version = r.u32();
    if (version != kBootlegFileVersion) {
        throw LoadError("unsupported bootleg file version " + std::to_string(version) + " in "
                        + path.string());
    }
    const auto variant_raw = r.u8();
    if (variant_raw > 2) {
        throw LoadError("invalid variant tag in " + path.string());
    }
    auto source = r.str();
    const auto width = r.u64();
    std::vector<Fingerprint> columns;
    columns.reserve(width);
    for (std::uint64_t i = 0; i < width; ++i) {
        const auto v = r.u64();
        if (v == 0 || v > kFingerprintMask) {
            throw LoadError("invalid fingerprint value at column " + std::to_string(i) + " in "
                            + path.string());
        }
        columns.emplace_back(v);
    }
    if (r.remaining() != 0) {
        throw LoadError("trailing bytes in " + path.string());
    }
    return { BootlegScore(static_cast<Variant>(variant_raw), std::move(columns)),
             std::move(source) };
}

} // namespace bootleg
