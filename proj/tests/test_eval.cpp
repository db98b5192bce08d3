#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <unordered_set>

#include "bootleg/eval.hpp"
#include "bootleg/rng.hpp"
#include "support/fixtures.hpp"

using namespace bootleg;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

/// Clean corpus where the sheet bootleg is exactly the MIDI sharp variant.
Corpus clean_corpus(Rng& rng, std::size_t n_pieces, std::size_t width)
{
    Corpus corpus;
    for (std::size_t p = 0; p < n_pieces; ++p) {
        const auto score = fixtures::random_score(rng, width, Variant::SheetDerived, 4);
        corpus.pieces.push_back({ "piece" + std::to_string(p), score });
        corpus.queries.push_back({ "midi" + std::to_string(p), fixtures::as_pair(score), p });
    }
    return corpus;
}

} // namespace

TEST_CASE("mrr: direct evaluation of the formula")
{
    CHECK(mrr(std::vector<std::size_t>{ 1, 1, 1 }) == 1.0);
    CHECK_THAT(mrr(std::vector<std::size_t>{ 1, 2, 4 }), WithinAbs(7.0 / 12.0, 1e-12));
    CHECK_THROWS_AS(mrr({}), EvalError);
    CHECK_THROWS_AS(mrr(std::vector<std::size_t>{ 1, 0 }), EvalError);
}

TEST_CASE("rank computed by search matches a brute-force rank rule")
{
    // rank = 1 + #strictly greater + #tied with smaller piece id
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto db = fixtures::random_db(rng, 10, 20, 60, 2);
        const auto index = build_index(db, kNoEscalation);
        const auto& piece = db[rng.below(db.size())].score;
        const auto query = fixtures::as_pair(piece.slice(0, 10));
        const auto result = search(index, query);

        for (std::uint32_t p = 0; p < db.size(); ++p) {
            const int my_score = result.entries[result.rank_of(p) - 1].score;
            std::size_t brute = 1;
            for (const auto& e : result.entries) {
                if (e.score > my_score || (e.score == my_score && e.piece_id < p)) {
                    ++brute;
                }
            }
            CHECK(result.rank_of(p) == brute);
        }
    }
}

TEST_CASE("sample_query: full, degenerate and seeded draws")
{
    Rng rng(5);
    const auto pair = fixtures::as_pair(fixtures::random_score(rng, 1000));

    SECTION("Full returns the input unchanged")
    {
        Rng r(1);
        const auto s = sample_query(pair, std::nullopt, r);
        CHECK(s.pair.sharp == pair.sharp);
        CHECK(s.start == 0);
        CHECK_FALSE(s.truncated);
    }

    SECTION("L == width forces start 0")
    {
        Rng r(1);
        const auto s = sample_query(pair, 1000, r);
        CHECK(s.pair.sharp == pair.sharp);
        CHECK(s.start == 0);
        CHECK_FALSE(s.truncated);
    }

    SECTION("L > width returns the whole score flagged truncated")
    {
        Rng r(1);
        const auto s = sample_query(pair, 2000, r);
        CHECK(s.pair.width() == 1000);
        CHECK(s.truncated);
    }

    SECTION("same seed, same slice")
    {
        Rng r1(42), r2(42);
        const auto a = sample_query(pair, 500, r1);
        const auto b = sample_query(pair, 500, r2);
        CHECK(a.start == b.start);
        CHECK(a.pair.sharp == b.pair.sharp);
        CHECK(a.pair.width() == 500);
    }

    SECTION("width 0 is an error")
    {
        const QueryBootlegPair empty(BootlegScore(Variant::Sharp), BootlegScore(Variant::Flat));
        Rng r(1);
        CHECK_THROWS_AS(sample_query(empty, std::nullopt, r), EvalError);
    }
}

TEST_CASE("corrupt_bootleg: statistics and determinism")
{
    Rng gen(77);
    const auto score = fixtures::random_score(gen, 5000, Variant::SheetDerived, 4);

    SECTION("p_del 0 / p_flip 0 is the identity apart from variant")
    {
        Rng rng(1);
        const auto out = corrupt_bootleg(score, { 0.0, 0.0, 1 }, rng);
        CHECK(out.columns() == score.columns());
    }

    SECTION("deletion rate is close to p_del")
    {
        Rng rng(2);
        const auto out = corrupt_bootleg(score, { 0.2, 0.0, 0 }, rng);
        const auto kept = static_cast<double>(out.width()) / static_cast<double>(score.width());
        CHECK(kept > 0.75);
        CHECK(kept < 0.85);
    }

    SECTION("same seed gives identical corruption")
    {
        Rng r1(3), r2(3);
        const auto a = corrupt_bootleg(score, { 0.1, 0.1, 1 }, r1);
        const auto b = corrupt_bootleg(score, { 0.1, 0.1, 1 }, r2);
        CHECK(a.columns() == b.columns());
    }
}

TEST_CASE("run_simulation: clean corpus retrieves perfectly")
{
    Rng rng(2025);
    const auto corpus = clean_corpus(rng, 12, 300);

    SimulationConfig config;
    config.db_sizes = { 12 };
    config.query_lengths = { QueryLength{ 100 }, std::nullopt };
    config.trials = 2;
    config.samples_per_midi = 3;
    config.seed = 7;
    config.threshold = kNoEscalation;

    const auto report = run_simulation(corpus, config);
    REQUIRE(report.cells.size() == 2);
    for (const auto& cell : report.cells) {
        CHECK(cell.mean == 1.0);
        for (const auto v : cell.per_trial) {
            CHECK(v == 1.0);
        }
    }
    CHECK(report.records.size() == 2 * 2 * 12 * 3);
    for (const auto& rec : report.records) {
        CHECK(rec.rank == 1);
    }
}

TEST_CASE("run_simulation: same seed twice gives identical reports")
{
    Rng rng(31);
    const auto corpus = clean_corpus(rng, 8, 120);

    SimulationConfig config;
    config.db_sizes = { 4, 8 };
    config.query_lengths = { QueryLength{ 50 } };
    config.trials = 2;
    config.samples_per_midi = 2;
    config.seed = 99;

    const auto a = run_simulation(corpus, config);
    const auto b = run_simulation(corpus, config);
    CHECK(report_to_csv(a) == report_to_csv(b));
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].rank == b.records[i].rank);
        CHECK(a.records[i].midi == b.records[i].midi);
        CHECK(a.records[i].sample == b.records[i].sample);
    }
}

TEST_CASE("run_simulation: parallel jobs do not change the records")
{
    Rng rng(12);
    const auto corpus = clean_corpus(rng, 6, 150);

    SimulationConfig config;
    config.db_sizes = { 6 };
    config.query_lengths = { QueryLength{ 40 }, std::nullopt };
    config.trials = 1;
    config.samples_per_midi = 4;
    config.seed = 5;

    auto parallel = config;
    parallel.jobs = 4;

    const auto a = run_simulation(corpus, config);
    const auto b = run_simulation(corpus, parallel);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].rank == b.records[i].rank);
        CHECK(a.records[i].true_score == b.records[i].true_score);
        CHECK(a.records[i].midi == b.records[i].midi);
    }
    CHECK(report_to_csv(a) == report_to_csv(b));
}

TEST_CASE("run_simulation: smaller databases only query their own pieces")
{
    Rng rng(21);
    const auto corpus = clean_corpus(rng, 10, 100);

    SimulationConfig config;
    config.db_sizes = { 3 };
    config.query_lengths = { std::nullopt };
    config.trials = 2;
    config.samples_per_midi = 1;
    config.seed = 17;

    const auto report = run_simulation(corpus, config);
    // every trial draws 3 pieces and runs exactly their 3 queries
    CHECK(report.records.size() == 2 * 3);
    for (const auto& rec : report.records) {
        CHECK(rec.rank >= 1);
        CHECK(rec.rank <= 3);
    }
}

TEST_CASE("run_simulation: config validation")
{
    Rng rng(2);
    const auto corpus = clean_corpus(rng, 3, 50);
    SimulationConfig config;
    config.query_lengths = { std::nullopt };
    config.trials = 1;
    config.samples_per_midi = 1;

    SECTION("db size beyond corpus")
    {
        config.db_sizes = { 4 };
        CHECK_THROWS_AS(run_simulation(corpus, config), ConfigError);
    }
    SECTION("zero trials")
    {
        config.db_sizes = { 2 };
        config.trials = 0;
        CHECK_THROWS_AS(run_simulation(corpus, config), ConfigError);
    }
    SECTION("unknown true piece")
    {
        config.db_sizes = { 2 };
        auto bad = corpus;
        bad.queries[0].true_piece = 99;
        CHECK_THROWS_AS(run_simulation(bad, config), ConfigError);
    }
}

TEST_CASE("fully corrupted query still appears with score 0 for its piece")
{
    Rng rng(3);
    auto corpus = clean_corpus(rng, 4, 80);
    // replace query 0's columns with fingerprints absent from every piece
    std::unordered_set<std::uint64_t> used;
    for (const auto& piece : corpus.pieces) {
        for (const auto fp : piece.sheet.columns()) {
            used.insert(fp.value());
        }
    }
    BootlegScore absent(Variant::Sharp);
    for (std::uint64_t v = (std::uint64_t{ 1 } << 60) | 1; absent.width() < 50; ++v) {
        if (!used.contains(v)) {
            absent.append(Fingerprint(v));
        }
    }
    corpus.queries[0].bootlegs = fixtures::as_pair(absent);

    SimulationConfig config;
    config.db_sizes = { 4 };
    config.query_lengths = { std::nullopt };
    config.trials = 1;
    config.samples_per_midi = 1;
    config.seed = 1;

    const auto report = run_simulation(corpus, config);
    const auto& rec0 = report.records[0];
    CHECK(rec0.midi == "midi0");
    CHECK(rec0.true_score == 0);
    // all four pieces score 0, so the tie-break puts piece id 0 first
    CHECK(rec0.rank == 1);
}
