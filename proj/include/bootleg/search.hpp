#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/index_core.hpp"
#include "bootleg/midi_features.hpp"

namespace bootleg {

struct MatchHit {
    std::uint32_t piece_id;
    std::uint32_t t_ref;   // offset in the database piece
    std::uint32_t t_query; // offset in the query
};

struct SearchOptions {
    /// Half-width of the histogram bin smear. 0 = exact integer bins.
    int bin_smear = 0;
};

struct PieceScore {
    std::uint32_t piece_id = 0;
    int score = 0;       // max(sharp, flat)
    int sharp_score = 0; // per-variant sub-scores, for diagnostics
    int flat_score = 0;
    std::int64_t best_offset = 0; // t_ref - t_query of the winning bin

    friend bool operator==(const PieceScore&, const PieceScore&) = default;
};

/// Pieces ordered by score descending, ties by piece id ascending. Every
/// database piece is present (non-matching pieces score 0).
struct RankedResult {
    std::vector<PieceScore> entries;

    /// 1-based rank of a piece; equals 1 + #strictly-greater +
    /// #equal-with-smaller-id by construction of the sort order.
    std::size_t rank_of(std::uint32_t piece_id) const
    {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].piece_id == piece_id) {
                return i + 1;
            }
        }
        return 0;
    }
};

struct QueryKey {
    IndexKey key;
    std::uint32_t t_query;
};

/// Keys a query emits, mirroring the index's escalation: a non-escalated
/// column emits its Single fingerprint; an escalated column with two
/// following columns emits the anchored Triplet; escalated columns too
/// close to the end emit nothing.
inline std::vector<QueryKey> query_keys(const BootlegScore& query,
                                        const std::unordered_set<std::uint64_t>& escalated)
{
    std::vector<QueryKey> keys;
    keys.reserve(query.width());
    const auto& cols = query.columns();
    for (std::uint32_t t = 0; t < cols.size(); ++t) {
        const std::uint64_t fp = cols[t].value();
        if (!escalated.contains(fp)) {
            keys.push_back({ IndexKey::make_single(fp), t });
        } else if (t + 2 < cols.size()) {
            keys.push_back(
                { IndexKey::make_triplet(fp, cols[t + 1].value(), cols[t + 2].value()), t });
        }
    }
    return keys;
}

namespace detail {

    /// Max number of diffs falling into one smeared bin. With smear s the
    /// bin at b counts diffs in [b-s, b+s], so the answer is the densest
    /// window of width 2s+1 over the sorted diffs.
    inline std::pair<int, std::int64_t> max_bin(std::vector<std::int64_t>& diffs, int smear)
    {
        if (diffs.empty()) {
            return { 0, 0 };
        }
        std::sort(diffs.begin(), diffs.end());
        int best = 0;
        std::int64_t best_diff = diffs.front();
        std::size_t lo = 0;
        for (std::size_t hi = 0; hi < diffs.size(); ++hi) {
            while (diffs[hi] - diffs[lo] > 2 * smear) {
                ++lo;
            }
            const int count = static_cast<int>(hi - lo + 1);
            if (count > best) {
                best = count;
                best_diff = diffs[lo];
            }
        }
        return { best, best_diff };
    }

} // namespace detail

/// Offset-histogram match score for one piece: hits are binned by exact
/// integer (t_ref - t_query) and the maximum bin count is returned.
inline int histogram_score(std::span<const MatchHit> hits, std::uint32_t piece_id,
                           const SearchOptions& options = {})
{
    std::vector<std::int64_t> diffs;
    for (const auto& hit : hits) {
        if (hit.piece_id == piece_id) {
            diffs.push_back(static_cast<std::int64_t>(hit.t_ref)
                            - static_cast<std::int64_t>(hit.t_query));
        }
    }
    return detail::max_bin(diffs, options.bin_smear).first;
}

namespace detail {

    struct VariantScores {
        std::vector<int> scores;
        std::vector<std::int64_t> best_offsets;
    };

    inline VariantScores score_variant_indexed(const ReverseIndex& index,
                                               const BootlegScore& query,
                                               const SearchOptions& options)
    {
        std::vector<std::vector<std::int64_t>> diffs(index.piece_count());
        for (const auto& qk : query_keys(query, index.escalated())) {
            for (const auto& post : index.lookup(qk.key)) {
                diffs[post.piece_id].push_back(static_cast<std::int64_t>(post.offset)
                                               - static_cast<std::int64_t>(qk.t_query));
            }
        }
        VariantScores out;
        out.scores.resize(index.piece_count());
        out.best_offsets.resize(index.piece_count());
        for (std::size_t p = 0; p < diffs.size(); ++p) {
            const auto [count, diff] = max_bin(diffs[p], options.bin_smear);
            out.scores[p] = count;
            out.best_offsets[p] = diff;
        }
        return out;
    }

    inline RankedResult combine_variants(VariantScores sharp, VariantScores flat)
    {
        RankedResult result;
        result.entries.reserve(sharp.scores.size());
        for (std::uint32_t p = 0; p < sharp.scores.size(); ++p) {
            PieceScore e;
            e.piece_id = p;
            e.sharp_score = sharp.scores[p];
            e.flat_score = flat.scores[p];
            e.score = std::max(e.sharp_score, e.flat_score);
            e.best_offset
                = e.sharp_score >= e.flat_score ? sharp.best_offsets[p] : flat.best_offsets[p];
            result.entries.push_back(e);
        }
        std::sort(result.entries.begin(), result.entries.end(),
                  [](const PieceScore& a, const PieceScore& b) {
                      if (a.score != b.score) {
                          return a.score > b.score;
                      }
                      return a.piece_id < b.piece_id;
                  });
        return result;
    }

} // namespace detail

/// Ranks every database piece for a MIDI query: per variant, gather hits
/// through the reverse index and take each piece's maximum offset-histogram
/// bin; a piece's final score is the larger of its sharp- and flat-variant
/// scores.
inline RankedResult search(const ReverseIndex& index, const QueryBootlegPair& query,
                           const SearchOptions& options = {})
{
    if (query.width() == 0) {
        throw EmptyQueryError("query bootleg has width 0");
    }
    auto sharp = detail::score_variant_indexed(index, query.sharp, options);
    auto flat = detail::score_variant_indexed(index, query.flat, options);
    return detail::combine_variants(std::move(sharp), std::move(flat));
}

/// Test oracle: the same scoring contract computed directly from the
/// database pieces with no index and no escalation. Enumerates every
/// (t_ref, t_query) pair with equal fingerprints per piece.
inline RankedResult linear_scan_oracle(std::span<const IndexedPiece> db,
                                       const QueryBootlegPair& query,
                                       const SearchOptions& options = {})
{
    if (query.width() == 0) {
        throw EmptyQueryError("query bootleg has width 0");
    }
    auto score_variant = [&](const BootlegScore& variant) {
        detail::VariantScores out;
        out.scores.resize(db.size());
        out.best_offsets.resize(db.size());
        for (std::size_t p = 0; p < db.size(); ++p) {
            std::unordered_map<std::uint64_t, std::vector<std::int64_t>> offsets_by_fp;
            const auto& ref_cols = db[p].score.columns();
            for (std::size_t t = 0; t < ref_cols.size(); ++t) {
                offsets_by_fp[ref_cols[t].value()].push_back(static_cast<std::int64_t>(t));
            }
            std::vector<std::int64_t> diffs;
            const auto& query_cols = variant.columns();
            for (std::size_t tq = 0; tq < query_cols.size(); ++tq) {
                const auto it = offsets_by_fp.find(query_cols[tq].value());
                if (it == offsets_by_fp.end()) {
                    continue;
                }
                for (const auto tr : it->second) {
                    diffs.push_back(tr - static_cast<std::int64_t>(tq));
                }
            }
            const auto [count, diff] = detail::max_bin(diffs, options.bin_smear);
            out.scores[p] = count;
            out.best_offsets[p] = diff;
        }
        return out;
    };
    return detail::combine_variants(score_variant(query.sharp), score_variant(query.flat));
}

} // namespace bootleg
