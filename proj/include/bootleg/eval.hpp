#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/config.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/index_core.hpp"
#include "bootleg/io_util.hpp"
#include "bootleg/manifest.hpp"
#include "bootleg/midi_features.hpp"
#include "bootleg/parallel.hpp"
#include "bootleg/rng.hpp"
#include "bootleg/search.hpp"

namespace bootleg {

/// A query length in bootleg columns; nullopt means the full score.
using QueryLength = std::optional<std::size_t>;

inline std::string length_label(QueryLength length)
{
    return length ? std::to_string(*length) : "full";
}

/// Mean reciprocal rank: (1/M) * sum(1/R_i). Ranks are 1-based.
inline double mrr(std::span<const std::size_t> ranks)
{
    if (ranks.empty()) {
        throw EvalError("mrr of an empty rank list");
    }
    double sum = 0;
    for (const auto rank : ranks) {
        if (rank < 1) {
            throw EvalError("rank must be >= 1");
        }
        sum += 1.0 / static_cast<double>(rank);
    }
    return sum / static_cast<double>(ranks.size());
}

struct SampledQuery {
    QueryBootlegPair pair;
    std::size_t start = 0;
    bool truncated = false; // source was shorter than the requested length
};

/// Uniform random interval of length L from both variants (same start).
/// Full returns the input unchanged; a source shorter than L is returned
/// whole with the truncation flag set.
inline SampledQuery sample_query(const QueryBootlegPair& bootleg, QueryLength length, Rng& rng)
{
    const std::size_t width = bootleg.width();
    if (width == 0) {
        throw EvalError("cannot sample from a width-0 bootleg score");
    }
    if (!length || *length >= width) {
        return { bootleg, 0, length.has_value() && *length > width };
    }
    const std::size_t start = rng.below(width - *length + 1);
    return { QueryBootlegPair(bootleg.sharp.slice(start, *length),
                              bootleg.flat.slice(start, *length)),
             start, false };
}

struct NoiseModel {
    double p_del = 0.1;  // per-column deletion probability
    double p_flip = 0.1; // per-column probability of receiving bit flips
    int bit_flips = 1;   // distinct bits flipped when a column is hit
};

/// Simulates sheet-extraction noise on a clean bootleg score: columns are
/// deleted with probability p_del, otherwise hit with `bit_flips` random
/// bit toggles with probability p_flip. A column flipped to all-zero
/// counts as deleted.
inline BootlegScore corrupt_bootleg(const BootlegScore& score, const NoiseModel& noise, Rng& rng)
{
    BootlegScore out(Variant::SheetDerived);
    for (const auto fp : score.columns()) {
        if (rng.chance(noise.p_del)) {
            continue;
        }
        std::uint64_t column = fp.value();
        if (noise.bit_flips > 0 && rng.chance(noise.p_flip)) {
            std::uint64_t flipped_bits = 0;
            while (static_cast<int>(std::popcount(flipped_bits)) < noise.bit_flips) {
                flipped_bits |= std::uint64_t{1} << rng.below(kNumStaffPositions);
            }
            column ^= flipped_bits;
        }
        if (column != 0) {
            out.append(Fingerprint(column));
        }
    }
    return out;
}

struct CorpusPiece {
    std::string name;
    BootlegScore sheet;
};

struct CorpusQuery {
    std::string name;
    QueryBootlegPair bootlegs;
    std::size_t true_piece; // index into Corpus::pieces
};

/// In-memory evaluation corpus: the sheet-side database pieces plus the
/// MIDI queries with their ground-truth pairing.
struct Corpus {
    std::vector<CorpusPiece> pieces;
    std::vector<CorpusQuery> queries;
};

struct SimulationConfig {
    std::vector<std::size_t> db_sizes;
    std::vector<QueryLength> query_lengths;
    std::size_t trials = 10;
    std::size_t samples_per_midi = 10;
    std::uint64_t seed = 0;
    std::uint64_t threshold = kDefaultEscalationThreshold;
    int bin_smear = 0;
    int jobs = 1;
};

struct QueryRecord {
    std::size_t trial;
    std::size_t db_size;
    QueryLength query_length;
    std::string midi;
    std::size_t sample;
    std::size_t rank;
    int true_score;
    int top_score;
    bool truncated;
    double wall_ms;
};

struct MrrCell {
    std::size_t db_size;
    QueryLength query_length;
    std::vector<double> per_trial;
    double mean = 0;
};

struct IndexSnapshot {
    std::size_t db_size;
    std::size_t trial;
    IndexStats stats;
};

struct EvalReport {
    std::vector<QueryRecord> records;
    std::vector<MrrCell> cells;
    std::vector<IndexSnapshot> index_snapshots;
    double mean_query_ms = 0;
};

namespace detail {

    inline std::uint64_t mix_ids(std::initializer_list<std::uint64_t> parts)
    {
        std::uint64_t h = 0x51ab2f00d1ce5ULL;
        for (const auto part : parts) {
            h ^= part + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0xff51afd7ed558ccdULL;
            h ^= h >> 33;
        }
        return h;
    }

} // namespace detail

/// Runs the full query-sampling protocol: per trial, draw a database of
/// each requested size, build its index, run every eligible query
/// (those whose true piece landed in the draw) at every length with
/// `samples_per_midi` random excerpts, and aggregate MRR per
/// (db_size, length) cell averaged over trials.
inline EvalReport run_simulation(const Corpus& corpus, const SimulationConfig& config)
{
    if (corpus.pieces.empty() || corpus.queries.empty()) {
        throw ConfigError("empty corpus");
    }
    if (config.db_sizes.empty() || config.query_lengths.empty()) {
        throw ConfigError("db_sizes and query_lengths must be non-empty");
    }
    if (config.trials < 1 || config.samples_per_midi < 1) {
        throw ConfigError("trials and samples_per_midi must be >= 1");
    }
    for (const auto n : config.db_sizes) {
        if (n < 1 || n > corpus.pieces.size()) {
            throw ConfigError("db_size " + std::to_string(n) + " out of range 1.."
                              + std::to_string(corpus.pieces.size()));
        }
    }
    for (const auto& query : corpus.queries) {
        if (query.true_piece >= corpus.pieces.size()) {
            throw ConfigError("query `" + query.name + "` references unknown piece");
        }
        if (query.bootlegs.width() == 0) {
            throw ConfigError("query `" + query.name + "` has a width-0 bootleg");
        }
    }

    EvalReport report;
    const SearchOptions search_options{ config.bin_smear };

    for (std::size_t trial = 0; trial < config.trials; ++trial) {
        for (const auto db_size : config.db_sizes) {
            // draw the database for this (trial, size)
            std::vector<std::size_t> subset;
            if (db_size == corpus.pieces.size()) {
                subset.resize(db_size);
                std::iota(subset.begin(), subset.end(), std::size_t{0});
            } else {
                Rng draw_rng(detail::mix_ids({ config.seed, 0xDB, trial, db_size }));
                subset = draw_rng.sample_indices(corpus.pieces.size(), db_size);
                std::sort(subset.begin(), subset.end());
            }
            std::unordered_map<std::size_t, std::uint32_t> local_id;
            std::vector<IndexedPiece> db;
            db.reserve(subset.size());
            for (const auto corpus_idx : subset) {
                local_id[corpus_idx] = static_cast<std::uint32_t>(db.size());
                db.push_back(
                    { corpus.pieces[corpus_idx].name, corpus.pieces[corpus_idx].sheet });
            }
            const auto index = build_index(db, config.threshold);
            report.index_snapshots.push_back({ db_size, trial, index.stats() });

            std::vector<std::size_t> eligible;
            for (std::size_t q = 0; q < corpus.queries.size(); ++q) {
                if (local_id.contains(corpus.queries[q].true_piece)) {
                    eligible.push_back(q);
                }
            }

            struct Task {
                std::size_t length_idx;
                std::size_t query_idx;
                std::size_t sample;
            };
            std::vector<Task> tasks;
            tasks.reserve(config.query_lengths.size() * eligible.size()
                          * config.samples_per_midi);
            for (std::size_t li = 0; li < config.query_lengths.size(); ++li) {
                for (const auto qi : eligible) {
                    for (std::size_t s = 0; s < config.samples_per_midi; ++s) {
                        tasks.push_back({ li, qi, s });
                    }
                }
            }

            std::vector<QueryRecord> records(tasks.size());
            detail::parallel_for(tasks.size(), config.jobs, [&](std::size_t ti) {
                const auto& task = tasks[ti];
                const auto& query = corpus.queries[task.query_idx];
                const auto length = config.query_lengths[task.length_idx];
                Rng rng(detail::mix_ids({ config.seed, 0x5A, trial, db_size, task.length_idx,
                                          task.query_idx, task.sample }));
                const auto sampled = sample_query(query.bootlegs, length, rng);

                const auto t0 = std::chrono::steady_clock::now();
                const auto result = search(index, sampled.pair, search_options);
                const auto t1 = std::chrono::steady_clock::now();

                const auto true_local = local_id.at(query.true_piece);
                const auto rank = result.rank_of(true_local);
                QueryRecord rec{ trial,
                                 db_size,
                                 length,
                                 query.name,
                                 task.sample,
                                 rank,
                                 result.entries[rank - 1].score,
                                 result.entries[0].score,
                                 sampled.truncated,
                                 std::chrono::duration<double, std::milli>(t1 - t0).count() };
                records[ti] = std::move(rec);
            });
            for (auto& rec : records) {
                report.records.push_back(std::move(rec));
            }
        }
    }

    // aggregate per (db_size, length): MRR per trial, then mean over trials
    double total_ms = 0;
    for (const auto& rec : report.records) {
        total_ms += rec.wall_ms;
    }
    report.mean_query_ms = report.records.empty()
        ? 0
        : total_ms / static_cast<double>(report.records.size());

    for (const auto db_size : config.db_sizes) {
        for (const auto& length : config.query_lengths) {
            MrrCell cell{ db_size, length, {}, 0 };
            for (std::size_t trial = 0; trial < config.trials; ++trial) {
                std::vector<std::size_t> ranks;
                for (const auto& rec : report.records) {
                    if (rec.trial == trial && rec.db_size == db_size
                        && rec.query_length == length) {
                        ranks.push_back(rec.rank);
                    }
                }
                if (!ranks.empty()) {
                    cell.per_trial.push_back(mrr(ranks));
                }
            }
            for (const auto v : cell.per_trial) {
                cell.mean += v;
            }
            if (!cell.per_trial.empty()) {
                cell.mean /= static_cast<double>(cell.per_trial.size());
            }
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

// -------- report serialization --------

inline nlohmann::json report_to_json(const EvalReport& report, const SimulationConfig& config)
{
    nlohmann::json j;
    j["config"] = { { "db_sizes", config.db_sizes },
                    { "trials", config.trials },
                    { "samples_per_midi", config.samples_per_midi },
                    { "seed", config.seed },
                    { "threshold", config.threshold },
                    { "bin_smear", config.bin_smear } };
    auto& lengths = j["config"]["query_lengths"] = nlohmann::json::array();
    for (const auto& length : config.query_lengths) {
        lengths.push_back(length_label(length));
    }
    j["mean_query_ms"] = report.mean_query_ms;
    auto& cells = j["cells"] = nlohmann::json::array();
    for (const auto& cell : report.cells) {
        cells.push_back({ { "db_size", cell.db_size },
                          { "query_length", length_label(cell.query_length) },
                          { "per_trial_mrr", cell.per_trial },
                          { "mean_mrr", cell.mean } });
    }
    auto& snapshots = j["index_stats"] = nlohmann::json::array();
    for (const auto& snap : report.index_snapshots) {
        snapshots.push_back({ { "db_size", snap.db_size },
                              { "trial", snap.trial },
                              { "stats", stats_to_json(snap.stats) } });
    }
    auto& records = j["records"] = nlohmann::json::array();
    for (const auto& rec : report.records) {
        records.push_back({ { "trial", rec.trial },
                            { "db_size", rec.db_size },
                            { "query_length", length_label(rec.query_length) },
                            { "midi", rec.midi },
                            { "sample", rec.sample },
                            { "rank", rec.rank },
                            { "true_score", rec.true_score },
                            { "top_score", rec.top_score },
                            { "truncated", rec.truncated },
                            { "wall_ms", rec.wall_ms } });
    }
    return j;
}

/// CSV of (db_size, query_length, trial, mrr); one row per simulation
/// cell per trial, suitable for bar plots.
inline std::string report_to_csv(const EvalReport& report)
{
    std::string out = "db_size,query_length,trial,mrr\n";
    char buf[64];
    for (const auto& cell : report.cells) {
        for (std::size_t trial = 0; trial < cell.per_trial.size(); ++trial) {
            std::snprintf(buf, sizeof(buf), "%zu,%s,%zu,%.6f\n", cell.db_size,
                          length_label(cell.query_length).c_str(), trial,
                          cell.per_trial[trial]);
            out += buf;
        }
    }
    return out;
}

// -------- file-level configuration (cmd_evaluate) --------

struct EvalFileConfig {
    std::filesystem::path ground_truth;
    std::optional<std::filesystem::path> database;
    SimulationConfig sim;
    NoiseModel noise;    // used only when no database manifest is given
    double group_tolerance = kDefaultSimultaneityTolerance;
    std::filesystem::path output_prefix;
};

inline EvalFileConfig parse_eval_config(const std::filesystem::path& path)
{
    const auto kv = KeyValueFile::parse_file(path);
    const auto base = path.parent_path();
    auto resolve = [&base](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    EvalFileConfig config;
    config.ground_truth = resolve(kv.get("ground_truth", "<required>"));
    if (kv.has("database")) {
        config.database = resolve(kv.get_or("database", ""));
    }
    config.output_prefix = resolve(kv.get("output_prefix", "<required>"));

    for (const auto& token : kv.get_list_or("db_sizes", {})) {
        config.sim.db_sizes.push_back(static_cast<std::size_t>(std::stoull(token)));
    }
    if (config.sim.db_sizes.empty()) {
        throw ConfigError("missing config key `db_sizes` (documented default: none, required)");
    }
    for (const auto& token : kv.get_list_or("query_lengths", { "full" })) {
        if (token == "full" || token == "Full") {
            config.sim.query_lengths.push_back(std::nullopt);
        } else {
            config.sim.query_lengths.push_back(static_cast<std::size_t>(std::stoull(token)));
        }
    }
    config.sim.trials = static_cast<std::size_t>(kv.get_int_or("trials", 10));
    config.sim.samples_per_midi = static_cast<std::size_t>(kv.get_int_or("samples_per_midi", 10));
    config.sim.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", 0));
    config.sim.threshold = static_cast<std::uint64_t>(
        kv.get_int_or("threshold", static_cast<std::int64_t>(kDefaultEscalationThreshold)));
    config.sim.bin_smear = static_cast<int>(kv.get_int_or("bin_smear", 0));
    config.noise.p_del = kv.get_double_or("noise_p_del", 0.1);
    config.noise.p_flip = kv.get_double_or("noise_p_flip", 0.1);
    config.noise.bit_flips = static_cast<int>(kv.get_int_or("noise_bit_flips", 1));
    config.group_tolerance
        = kv.get_double_or("group_tolerance", kDefaultSimultaneityTolerance);

    const auto unknown = kv.unknown_keys(
        { "ground_truth", "database", "output_prefix", "db_sizes", "query_lengths", "trials",
          "samples_per_midi", "seed", "threshold", "bin_smear", "noise_p_del", "noise_p_flip",
          "noise_bit_flips", "group_tolerance", "jobs" });
    if (!unknown.empty()) {
        throw ConfigError("unknown config key `" + unknown.front() + "` in " + path.string());
    }
    config.sim.jobs = static_cast<int>(kv.get_int_or("jobs", 1));
    return config;
}

/// Builds the in-memory corpus for cmd_evaluate: extracts a bootleg pair
/// from every ground-truth MIDI, then either loads the sheet-side database
/// from its manifest or synthesizes it from the MIDI sharp variants under
/// the configured noise model.
inline Corpus assemble_corpus(const EvalFileConfig& config)
{
    const auto gt = parse_ground_truth_manifest(config.ground_truth);
    if (gt.empty()) {
        throw ConfigError("ground-truth manifest is empty: " + config.ground_truth.string());
    }

    Corpus corpus;
    std::unordered_map<std::string, std::size_t> piece_index;

    if (config.database) {
        const auto manifest = parse_database_manifest(*config.database);
        if (manifest.empty()) {
            throw ConfigError("database manifest is empty: " + config.database->string());
        }
        for (const auto& entry : manifest) {
            piece_index[entry.piece_id] = corpus.pieces.size();
            corpus.pieces.push_back({ entry.piece_id, load_bootleg(entry.bootleg_path).score });
        }
    }

    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto bytes = read_file_bytes(gt[i].midi_path);
        const auto events = group_note_events(parse_midi(bytes), config.group_tolerance);
        auto pair = midi_bootleg_pair(events);
        if (pair.width() == 0) {
            throw ConfigError("ground-truth MIDI produced a width-0 bootleg: "
                              + gt[i].midi_path.string());
        }

        std::size_t true_piece;
        if (config.database) {
            const auto it = piece_index.find(gt[i].piece_id);
            if (it == piece_index.end()) {
                throw ConfigError("ground-truth piece `" + gt[i].piece_id
                                  + "` is not in the database manifest");
            }
            true_piece = it->second;
        } else {
            if (piece_index.contains(gt[i].piece_id)) {
                throw ConfigError("duplicate piece `" + gt[i].piece_id
                                  + "` in ground truth; synthetic databases need unique pieces");
            }
            piece_index[gt[i].piece_id] = corpus.pieces.size();
            Rng noise_rng(detail::mix_ids({ config.sim.seed, 0xC0, i }));
            BootlegScore sheet(Variant::SheetDerived, pair.sharp.columns());
            corpus.pieces.push_back(
                { gt[i].piece_id, corrupt_bootleg(sheet, config.noise, noise_rng) });
            true_piece = corpus.pieces.size() - 1;
        }
        corpus.queries.push_back(
            { gt[i].midi_path.filename().string(), std::move(pair), true_piece });
    }
    return corpus;
}

} // namespace bootleg
