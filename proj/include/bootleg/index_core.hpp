#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/io_util.hpp"

namespace bootleg {

inline constexpr std::uint64_t kNoEscalation = ~std::uint64_t{0};
inline constexpr std::uint64_t kDefaultEscalationThreshold = 8000;

/// One occurrence of a fingerprint: which piece and at which column.
struct Posting {
    std::uint32_t piece_id;
    std::uint32_t offset;

    friend bool operator==(Posting, Posting) = default;
    friend auto operator<=>(Posting, Posting) = default;
};

/// Three consecutive fingerprints, used as the key for escalated
/// fingerprints. Lives in a separate key namespace from single
/// fingerprints, so no collision between the two kinds is possible.
struct TripletKey {
    std::uint64_t a, b, c;

    friend bool operator==(TripletKey, TripletKey) = default;
    friend auto operator<=>(TripletKey, TripletKey) = default;
};

struct TripletKeyHash {
    std::size_t operator()(const TripletKey& k) const
    {
        auto mix = [](std::uint64_t x) {
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
            return x ^ (x >> 31);
        };
        return static_cast<std::size_t>(mix(k.a) ^ mix(k.b * 0x9e3779b97f4a7c15ULL + 1)
                                        ^ mix(k.c * 0xd1b54a32d192ed03ULL + 2));
    }
};

struct IndexKey {
    enum class Kind { Single, Triplet };

    Kind kind;
    std::uint64_t single = 0; // valid when kind == Single
    TripletKey triplet{};     // valid when kind == Triplet

    static IndexKey make_single(std::uint64_t fp) { return { Kind::Single, fp, {} }; }
    static IndexKey make_triplet(std::uint64_t a, std::uint64_t b, std::uint64_t c)
    {
        return { Kind::Triplet, 0, { a, b, c } };
    }
};

struct IndexStats {
    std::uint64_t total_columns = 0;
    std::uint64_t unique_fingerprints_before = 0;
    std::uint64_t singleton_count = 0;     // pre-escalation frequency-1 fingerprints
    std::uint64_t max_frequency_before = 0;
    std::uint64_t threshold = kNoEscalation;
    std::uint64_t escalated_count = 0;
    std::uint64_t unique_single_keys = 0;
    std::uint64_t unique_triplet_keys = 0;
    std::uint64_t single_postings = 0;
    std::uint64_t triplet_postings = 0;
    std::uint64_t dropped_tails = 0; // escalated occurrences with < 2 following columns

    friend bool operator==(const IndexStats&, const IndexStats&) = default;
};

inline nlohmann::json stats_to_json(const IndexStats& s)
{
    return nlohmann::json{
        { "total_columns", s.total_columns },
        { "unique_fingerprints_before", s.unique_fingerprints_before },
        { "singleton_count", s.singleton_count },
        { "max_frequency_before", s.max_frequency_before },
        { "threshold", s.threshold },
        { "escalated_count", s.escalated_count },
        { "unique_single_keys", s.unique_single_keys },
        { "unique_triplet_keys", s.unique_triplet_keys },
        { "unique_keys_after", s.unique_single_keys + s.unique_triplet_keys },
        { "single_postings", s.single_postings },
        { "triplet_postings", s.triplet_postings },
        { "dropped_tails", s.dropped_tails },
    };
}

/// A database piece to be indexed.
struct IndexedPiece {
    std::string name;
    BootlegScore score;
};

/// Reverse index over bootleg columns: fingerprint (single or triplet)
/// -> sorted postings list. Immutable once built; safe to share across
/// query threads.
class ReverseIndex {
public:
    using SingleMap = std::unordered_map<std::uint64_t, std::vector<Posting>>;
    using TripletMap = std::unordered_map<TripletKey, std::vector<Posting>, TripletKeyHash>;

    std::size_t piece_count() const { return piece_names_.size(); }
    const std::vector<std::string>& piece_names() const { return piece_names_; }
    const std::vector<std::uint32_t>& piece_widths() const { return piece_widths_; }
    const std::unordered_set<std::uint64_t>& escalated() const { return escalated_; }
    const IndexStats& stats() const { return stats_; }
    const SingleMap& singles() const { return singles_; }
    const TripletMap& triplets() const { return triplets_; }

    bool is_escalated(std::uint64_t fp) const { return escalated_.contains(fp); }

    const std::vector<Posting>& lookup(const IndexKey& key) const
    {
        if (key.kind == IndexKey::Kind::Single) {
            const auto it = singles_.find(key.single);
            return it == singles_.end() ? kEmpty : it->second;
        }
        const auto it = triplets_.find(key.triplet);
        return it == triplets_.end() ? kEmpty : it->second;
    }

    friend ReverseIndex build_index(std::span<const IndexedPiece> db, std::uint64_t threshold);
    friend void save_index(const ReverseIndex& index, const std::filesystem::path& path);
    friend ReverseIndex load_index(const std::filesystem::path& path);

private:
    static inline const std::vector<Posting> kEmpty{};

    std::vector<std::string> piece_names_;
    std::vector<std::uint32_t> piece_widths_;
    std::unordered_set<std::uint64_t> escalated_;
    SingleMap singles_;
    TripletMap triplets_;
    IndexStats stats_;
};

/// Two-pass construction. Pass 1 inserts every column as a Single posting.
/// Pass 2 promotes every fingerprint occurring more than `threshold` times
/// across the whole database to triplet keys (fp_t, fp_{t+1}, fp_{t+2})
/// anchored at each occurrence t; occurrences with fewer than two
/// following columns are dropped and counted.
inline ReverseIndex build_index(std::span<const IndexedPiece> db, std::uint64_t threshold)
{
    if (threshold == 0) {
        throw BuildError("escalation threshold must be >= 1");
    }
    {
        std::unordered_set<std::string> seen;
        for (const auto& piece : db) {
            if (!seen.insert(piece.name).second) {
                throw BuildError("duplicate piece id: " + piece.name);
            }
        }
    }

    ReverseIndex index;
    index.stats_.threshold = threshold;
    index.piece_names_.reserve(db.size());
    index.piece_widths_.reserve(db.size());

    for (std::uint32_t p = 0; p < db.size(); ++p) {
        const auto& score = db[p].score;
        index.piece_names_.push_back(db[p].name);
        index.piece_widths_.push_back(static_cast<std::uint32_t>(score.width()));
        index.stats_.total_columns += score.width();
        for (std::uint32_t t = 0; t < score.width(); ++t) {
            index.singles_[score.column(t).value()].push_back({ p, t });
        }
    }

    index.stats_.unique_fingerprints_before = index.singles_.size();
    for (const auto& [fp, postings] : index.singles_) {
        index.stats_.max_frequency_before
            = std::max<std::uint64_t>(index.stats_.max_frequency_before, postings.size());
        if (postings.size() == 1) {
            ++index.stats_.singleton_count;
        }
        if (postings.size() > threshold) {
            index.escalated_.insert(fp);
        }
    }

    for (const auto fp : index.escalated_) {
        index.singles_.erase(fp);
    }
    for (std::uint32_t p = 0; p < db.size(); ++p) {
        const auto& cols = db[p].score.columns();
        for (std::uint32_t t = 0; t < cols.size(); ++t) {
            if (!index.escalated_.contains(cols[t].value())) {
                continue;
            }
            if (t + 2 < cols.size()) {
                const TripletKey key{ cols[t].value(), cols[t + 1].value(), cols[t + 2].value() };
                index.triplets_[key].push_back({ p, t });
            } else {
                ++index.stats_.dropped_tails;
            }
        }
    }

    for (auto& [fp, postings] : index.singles_) {
        std::sort(postings.begin(), postings.end());
        index.stats_.single_postings += postings.size();
    }
    for (auto& [key, postings] : index.triplets_) {
        std::sort(postings.begin(), postings.end());
        index.stats_.triplet_postings += postings.size();
    }
    index.stats_.escalated_count = index.escalated_.size();
    index.stats_.unique_single_keys = index.singles_.size();
    index.stats_.unique_triplet_keys = index.triplets_.size();
    return index;
}

// -------- index file format --------
//
// Little-endian layout:
//   magic "BTLGIDX\0" | u32 version
//   | u32 piece_count | piece_count x (string name, u32 width)
//   | u64 escalated_count | escalated values ascending
//   | u64 single_key_count | per key ascending: u64 fp, u64 n, n x (u32 piece, u32 offset)
//   | u64 triplet_key_count | per key ascending: 3 x u64, u64 n, n x (u32 piece, u32 offset)
//   | stats block (11 x u64)
//   | u32 crc32 over everything before it
//
// Keys and postings are written in sorted order, so two observably equal
// indexes serialize to identical bytes.

inline constexpr char kIndexFileMagic[8] = { 'B', 'T', 'L', 'G', 'I', 'D', 'X', '\0' };
inline constexpr std::uint32_t kIndexFileVersion = 1;

inline void save_index(const ReverseIndex& index, const std::filesystem::path& path)
{
    ByteWriter w;
    w.raw(kIndexFileMagic, sizeof(kIndexFileMagic));
    w.u32(kIndexFileVersion);

    w.u32(static_cast<std::uint32_t>(index.piece_names_.size()));
    for (std::size_t i = 0; i < index.piece_names_.size(); ++i) {
        w.str(index.piece_names_[i]);
        w.u32(index.piece_widths_[i]);
    }

    std::vector<std::uint64_t> escalated(index.escalated_.begin(), index.escalated_.end());
    std::sort(escalated.begin(), escalated.end());
    w.u64(escalated.size());
    for (const auto fp : escalated) {
        w.u64(fp);
    }

    auto write_postings = [&w](const std::vector<Posting>& postings) {
        w.u64(postings.size());
        for (const auto& post : postings) {
            w.u32(post.piece_id);
            w.u32(post.offset);
        }
    };

    std::vector<const ReverseIndex::SingleMap::value_type*> singles;
    singles.reserve(index.singles_.size());
    for (const auto& kv : index.singles_) {
        singles.push_back(&kv);
    }
    std::sort(singles.begin(), singles.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });
    w.u64(singles.size());
    for (const auto* kv : singles) {
        w.u64(kv->first);
        write_postings(kv->second);
    }

    std::vector<const ReverseIndex::TripletMap::value_type*> triplets;
    triplets.reserve(index.triplets_.size());
    for (const auto& kv : index.triplets_) {
        triplets.push_back(&kv);
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });
    w.u64(triplets.size());
    for (const auto* kv : triplets) {
        w.u64(kv->first.a);
        w.u64(kv->first.b);
        w.u64(kv->first.c);
        write_postings(kv->second);
    }

    const auto& s = index.stats_;
    for (const std::uint64_t v :
         { s.total_columns, s.unique_fingerprints_before, s.singleton_count,
           s.max_frequency_before, s.threshold, s.escalated_count, s.unique_single_keys,
           s.unique_triplet_keys, s.single_postings, s.triplet_postings, s.dropped_tails }) {
        w.u64(v);
    }

    atomic_write_with_crc(path, w.bytes());
}

inline ReverseIndex load_index(const std::filesystem::path& path)
{
    const auto payload = read_file_with_crc(path);
    ByteReader r(payload.data(), payload.size());
    const auto* magic = r.take(sizeof(kIndexFileMagic));
    if (!std::equal(magic, magic + sizeof(kIndexFileMagic), kIndexFileMagic)) {
        throw LoadError("bad magic bytes in " + path.string());
    }
    const auto version = r.u32();
    if (version != kIndexFileVersion) {
        throw LoadError("unsupported index version " + std::to_string(version) + " in "
                        + path.string());
    }

    ReverseIndex index;
    const auto piece_count = r.u32();
    index.piece_names_.reserve(piece_count);
    index.piece_widths_.reserve(piece_count);
    for (std::uint32_t i = 0; i < piece_count; ++i) {
        index.piece_names_.push_back(r.str());
        index.piece_widths_.push_back(r.u32());
    }

    const auto escalated_count = r.u64();
    for (std::uint64_t i = 0; i < escalated_count; ++i) {
        index.escalated_.insert(r.u64());
    }

    auto read_postings = [&r, piece_count](std::vector<Posting>& out) {
        const auto n = r.u64();
        out.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto piece = r.u32();
            const auto offset = r.u32();
            if (piece >= piece_count) {
                throw LoadError("posting references unknown piece id "
                                + std::to_string(piece));
            }
            out.push_back({ piece, offset });
        }
    };

    const auto single_count = r.u64();
    index.singles_.reserve(single_count);
    for (std::uint64_t i = 0; i < single_count; ++i) {
        const auto fp = r.u64();
        if (fp == 0 || fp > kFingerprintMask) {
            throw LoadError("invalid fingerprint key in " + path.string());
        }
        read_postings(index.singles_[fp]);
    }

    const auto triplet_count = r.u64();
    index.triplets_.reserve(triplet_count);
    for (std::uint64_t i = 0; i < triplet_count; ++i) {
        TripletKey key{};
        key.a = r.u64();
        key.b = r.u64();
        key.c = r.u64();
        read_postings(index.triplets_[key]);
    }

    auto& s = index.stats_;
    for (std::uint64_t* field :
         { &s.total_columns, &s.unique_fingerprints_before, &s.singleton_count,
           &s.max_frequency_before, &s.threshold, &s.escalated_count, &s.unique_single_keys,
           &s.unique_triplet_keys, &s.single_postings, &s.triplet_postings, &s.dropped_tails }) {
        *field = r.u64();
    }
    if (r.remaining() != 0) {
        throw LoadError("trailing bytes in " + path.string());
    }
    return index;
}

} // namespace bootleg
