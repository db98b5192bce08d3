// Command-line front end: extract features, build the reverse index, run
// queries and evaluations. Machine-readable output (JSON lines) goes to
// stdout; human diagnostics go to stderr. Exit codes: 0 success, 1 input
// error, 2 internal error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/eval.hpp"
#include "bootleg/index_core.hpp"
#include "bootleg/manifest.hpp"
#include "bootleg/midi_features.hpp"
#include "bootleg/search.hpp"
#include "bootleg/sheet_config.hpp"
#include "bootleg/sheet_features.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void emit(const json& j)
{
    std::cout << j.dump() << "\n";
}

int cmd_extract_midi(const fs::path& midi_path, const fs::path& sharp_out,
                     const fs::path& flat_out, double tolerance)
{
    const auto bytes = bootleg::read_file_bytes(midi_path);
    bootleg::MidiParseStats parse_stats;
    const auto onsets = bootleg::parse_midi(bytes, &parse_stats);
    const auto events = bootleg::group_note_events(onsets, tolerance);
    bootleg::ProjectionStats proj_stats;
    const auto pair = bootleg::midi_bootleg_pair(events, &proj_stats);

    if (pair.width() == 0) {
        std::cerr << "warning: " << midi_path.string() << " produced a width-0 bootleg score\n";
    }
    bootleg::save_bootleg(pair.sharp, sharp_out, midi_path.filename().string());
    bootleg::save_bootleg(pair.flat, flat_out, midi_path.filename().string());

    emit({ { "command", "extract-midi" },
           { "input", midi_path.string() },
           { "sharp", sharp_out.string() },
           { "flat", flat_out.string() },
           { "width", pair.width() },
           { "note_onsets", onsets.size() },
           { "note_events", events.size() },
           { "dropped_pitches", proj_stats.dropped_pitches },
           { "dropped_events", proj_stats.dropped_events },
           { "percussion_skipped", parse_stats.percussion_skipped } });
    return 0;
}

json page_stats_json(const bootleg::PageOutcome& page)
{
    return { { "page", page.path.string() },
             { "width", page.width },
             { "error", page.error },
             { "estimated_spacing", page.stats.estimated_spacing },
             { "scale_factor", page.stats.scale_factor },
             { "staves", page.stats.staves_found },
             { "systems", page.stats.systems },
             { "blobs", page.stats.blobs_detected },
             { "blobs_discarded", page.stats.blobs_discarded_far },
             { "positions_clamped", page.stats.positions_clamped } };
}

int cmd_extract_sheet(const std::vector<fs::path>& pages, const fs::path& out,
                      const std::optional<fs::path>& config_path,
                      const std::optional<fs::path>& overlay_dir, int jobs)
{
    const auto params = config_path ? bootleg::load_hyperparams(*config_path)
                                    : bootleg::SheetHyperparams{};
    if (overlay_dir) {
        fs::create_directories(*overlay_dir);
    }
    const auto piece = bootleg::extract_piece(pages, params, jobs, overlay_dir);

    json page_list = json::array();
    for (const auto& page : piece.pages) {
        if (page.error.empty()) {
            std::cerr << page.path.string() << ": width " << page.width << ", "
                      << page.stats.staves_found << " staves, " << page.stats.blobs_detected
                      << " blobs\n";
        } else {
            std::cerr << page.path.string() << ": FAILED: " << page.error << "\n";
        }
        page_list.push_back(page_stats_json(page));
    }

    bootleg::save_bootleg(piece.score, out,
                          std::to_string(pages.size()) + " pages starting at "
                              + pages.front().filename().string());
    emit({ { "command", "extract-sheet" },
           { "output", out.string() },
           { "width", piece.score.width() },
           { "pages", page_list } });
    return 0;
}

int cmd_build_index(const fs::path& manifest_path, const fs::path& out,
                    std::uint64_t threshold)
{
    const auto manifest = bootleg::parse_database_manifest(manifest_path);
    if (manifest.empty()) {
        throw bootleg::ConfigError("empty manifest: " + manifest_path.string());
    }
    std::vector<bootleg::IndexedPiece> db;
    db.reserve(manifest.size());
    for (const auto& entry : manifest) {
        db.push_back({ entry.piece_id, bootleg::load_bootleg(entry.bootleg_path).score });
    }
    const auto index = bootleg::build_index(db, threshold);
    bootleg::save_index(index, out);

    auto j = bootleg::stats_to_json(index.stats());
    j["command"] = "build-index";
    j["output"] = out.string();
    j["pieces"] = index.piece_count();
    emit(j);
    std::cerr << "indexed " << index.piece_count() << " pieces, "
              << index.stats().total_columns << " columns; unique keys "
              << index.stats().unique_fingerprints_before << " -> "
              << index.stats().unique_single_keys + index.stats().unique_triplet_keys
              << " after escalation\n";
    return 0;
}

int cmd_query(const fs::path& index_path, const fs::path& midi_path, int top_k,
              std::size_t segment_length, double tolerance, int bin_smear)
{
    const auto index = bootleg::load_index(index_path);
    const auto bytes = bootleg::read_file_bytes(midi_path);
    const auto events = bootleg::group_note_events(bootleg::parse_midi(bytes), tolerance);
    const auto pair = bootleg::midi_bootleg_pair(events);
    if (pair.width() == 0) {
        throw bootleg::EmptyQueryError("query MIDI produced a width-0 bootleg score: "
                                       + midi_path.string());
    }

    const bootleg::SearchOptions options{ bin_smear };
    const std::size_t width = pair.width();
    const std::size_t seg_len = segment_length == 0 ? width : segment_length;

    std::map<std::uint32_t, int> combined; // piece -> max score over segments
    std::size_t n_segments = 0;
    for (std::size_t start = 0; start < width; start += seg_len, ++n_segments) {
        const std::size_t len = std::min(seg_len, width - start);
        const bootleg::QueryBootlegPair segment(pair.sharp.slice(start, len),
                                                pair.flat.slice(start, len));
        const auto result = bootleg::search(index, segment, options);
        for (std::size_t rank = 0;
             rank < std::min<std::size_t>(result.entries.size(), static_cast<std::size_t>(top_k));
             ++rank) {
            const auto& entry = result.entries[rank];
            emit({ { "type", "segment" },
                   { "segment", n_segments },
                   { "start", start },
                   { "length", len },
                   { "rank", rank + 1 },
                   { "piece", index.piece_names()[entry.piece_id] },
                   { "score", entry.score },
                   { "sharp_score", entry.sharp_score },
                   { "flat_score", entry.flat_score },
                   { "best_offset", entry.best_offset } });
        }
        for (const auto& entry : result.entries) {
            auto& best = combined[entry.piece_id];
            best = std::max(best, entry.score);
        }
    }

    std::vector<std::pair<std::uint32_t, int>> ranking(combined.begin(), combined.end());
    std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    for (std::size_t rank = 0;
         rank < std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(top_k)); ++rank) {
        emit({ { "type", "combined" },
               { "rank", rank + 1 },
               { "piece", index.piece_names()[ranking[rank].first] },
               { "score", ranking[rank].second },
               { "segments", n_segments } });
    }
    return 0;
}

int cmd_evaluate(const fs::path& config_path, std::optional<int> jobs_override)
{
    auto config = bootleg::parse_eval_config(config_path);
    if (jobs_override) {
        config.sim.jobs = *jobs_override;
    }
    const auto corpus = bootleg::assemble_corpus(config);
    std::cerr << "corpus: " << corpus.pieces.size() << " pieces, " << corpus.queries.size()
              << " queries\n";
    const auto report = bootleg::run_simulation(corpus, config.sim);

    if (config.output_prefix.has_parent_path()) {
        fs::create_directories(config.output_prefix.parent_path());
    }
    const auto json_path = fs::path(config.output_prefix.string() + ".json");
    const auto csv_path = fs::path(config.output_prefix.string() + ".csv");
    bootleg::atomic_write_text(json_path, report_to_json(report, config.sim).dump(2) + "\n");
    bootleg::atomic_write_text(csv_path, bootleg::report_to_csv(report));

    json cells = json::array();
    for (const auto& cell : report.cells) {
        cells.push_back({ { "db_size", cell.db_size },
                          { "query_length", bootleg::length_label(cell.query_length) },
                          { "mean_mrr", cell.mean } });
    }
    emit({ { "command", "evaluate" },
           { "report_json", json_path.string() },
           { "report_csv", csv_path.string() },
           { "mean_query_ms", report.mean_query_ms },
           { "cells", cells } });
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{ "MIDI-to-sheet-music retrieval via bootleg-score fingerprinting" };
    app.require_subcommand(1);

    // extract-midi
    auto* midi_cmd = app.add_subcommand(
        "extract-midi", "Extract sharp- and flat-variant bootleg scores from a MIDI file");
    fs::path midi_in, midi_sharp_out, midi_flat_out;
    double tolerance = bootleg::kDefaultSimultaneityTolerance;
    midi_cmd->add_option("midi", midi_in, "input MIDI file")->required();
    midi_cmd->add_option("sharp_out", midi_sharp_out, "output sharp-variant bootleg file")
        ->required();
    midi_cmd->add_option("flat_out", midi_flat_out, "output flat-variant bootleg file")
        ->required();
    midi_cmd->add_option("--tolerance", tolerance,
                         "note-event simultaneity tolerance in seconds");

    // extract-sheet
    auto* sheet_cmd = app.add_subcommand(
        "extract-sheet", "Extract a bootleg score from sheet-music page images");
    std::vector<fs::path> sheet_pages;
    fs::path sheet_out;
    std::string sheet_config, sheet_overlays;
    bool dump_config = false;
    int sheet_jobs = 1;
    sheet_cmd->add_option("pages", sheet_pages, "page images in reading order");
    sheet_cmd->add_option("--out", sheet_out, "output bootleg file");
    sheet_cmd->add_option("--config", sheet_config, "pipeline settings file");
    sheet_cmd->add_option("--debug-overlays", sheet_overlays,
                          "directory for per-page overlay images");
    sheet_cmd->add_flag("--dump-config", dump_config,
                        "print the default settings file and exit");
    sheet_cmd->add_option("--jobs", sheet_jobs, "worker threads for page processing");

    // build-index
    auto* build_cmd = app.add_subcommand(
        "build-index", "Build the reverse index from a database manifest");
    fs::path build_manifest, build_out;
    std::uint64_t threshold = bootleg::kDefaultEscalationThreshold;
    build_cmd->add_option("manifest", build_manifest, "piece_id<TAB>bootleg_path lines")
        ->required();
    build_cmd->add_option("--out", build_out, "output index file")->required();
    build_cmd->add_option("--threshold", threshold,
                          "escalate fingerprints occurring more often than this");

    // query
    auto* query_cmd = app.add_subcommand("query", "Rank database pieces for a MIDI query");
    fs::path query_index, query_midi;
    int top_k = 10;
    std::size_t segment_length = 500;
    double query_tolerance = bootleg::kDefaultSimultaneityTolerance;
    int bin_smear = 0;
    query_cmd->add_option("index", query_index, "index file")->required();
    query_cmd->add_option("midi", query_midi, "query MIDI file")->required();
    query_cmd->add_option("--top-k", top_k, "results per ranking");
    query_cmd->add_option("--segment-length", segment_length,
                          "query segment length in columns (0 = whole query)");
    query_cmd->add_option("--tolerance", query_tolerance,
                          "note-event simultaneity tolerance in seconds");
    query_cmd->add_option("--bin-smear", bin_smear, "offset histogram smear half-width");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Run the retrieval simulation protocol");
    fs::path eval_config;
    int eval_jobs = 0;
    eval_cmd->add_option("config", eval_config, "evaluation settings file")->required();
    eval_cmd->add_option("--jobs", eval_jobs, "worker threads for queries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (midi_cmd->parsed()) {
            return cmd_extract_midi(midi_in, midi_sharp_out, midi_flat_out, tolerance);
        }
        if (sheet_cmd->parsed()) {
            if (dump_config) {
                std::cout << bootleg::default_hyperparams_text();
                return 0;
            }
            if (sheet_pages.empty() || sheet_out.empty()) {
                std::cerr << "error: extract-sheet needs page images and --out\n";
                return 1;
            }
            return cmd_extract_sheet(
                sheet_pages, sheet_out,
                sheet_config.empty() ? std::nullopt : std::optional<fs::path>(sheet_config),
                sheet_overlays.empty() ? std::nullopt : std::optional<fs::path>(sheet_overlays),
                sheet_jobs);
        }
        if (build_cmd->parsed()) {
            return cmd_build_index(build_manifest, build_out, threshold);
        }
        if (query_cmd->parsed()) {
            return cmd_query(query_index, query_midi, top_k, segment_length, query_tolerance,
                             bin_smear);
        }
        if (eval_cmd->parsed()) {
            return cmd_evaluate(eval_config,
                                eval_jobs > 0 ? std::optional<int>(eval_jobs) : std::nullopt);
        }
    } catch (const bootleg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
