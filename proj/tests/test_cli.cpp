// End-to-end tests of the command-line interface; each case invokes the
// built binary through the shell exactly as a user would.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/index_core.hpp"
#include "bootleg/io_util.hpp"
#include "bootleg/rng.hpp"
#include "bootleg/sheet_config.hpp"
#include "support/fixtures.hpp"
#include "support/staff_renderer.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code;
    std::string out;
    std::string err;

    std::vector<json> json_lines() const
    {
        std::vector<json> lines;
        std::istringstream in(out);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                lines.push_back(json::parse(line));
            }
        }
        return lines;
    }
};

fs::path work_dir()
{
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("bootleg_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

CmdResult run_cli(const std::string& args)
{
    const char* cli = std::getenv("BOOTLEG_CLI");
    REQUIRE(cli != nullptr);
    static int serial = 0;
    const auto out_path = work_dir() / ("stdout_" + std::to_string(serial) + ".txt");
    const auto err_path = work_dir() / ("stderr_" + std::to_string(serial) + ".txt");
    ++serial;
    const std::string cmd = std::string(cli) + " " + args + " > " + out_path.string() + " 2> "
        + err_path.string();
    const int status = std::system(cmd.c_str());
    return { WEXITSTATUS(status), slurp(out_path), slurp(err_path) };
}

fs::path write_midi(const std::string& name, const fixtures::MidiBuilder& builder)
{
    const auto path = work_dir() / name;
    const auto bytes = builder.bytes();
    std::ofstream(path, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    return path;
}

fixtures::MidiBuilder random_melody(std::uint64_t seed, int n_notes = 60)
{
    fixtures::MidiBuilder builder;
    bootleg::Rng rng(seed);
    std::uint32_t delta = 0;
    for (int i = 0; i < n_notes; ++i) {
        builder.note_on(delta, static_cast<int>(rng.range(30, 100)), 80);
        delta = 120 + static_cast<std::uint32_t>(rng.below(240));
    }
    return builder;
}

} // namespace

TEST_CASE("extract-midi writes both variants")
{
    fixtures::MidiBuilder builder;
    builder.note_on(0, 60, 90);
    const auto midi = write_midi("single.mid", builder);
    const auto sharp = work_dir() / "single_sharp.blg";
    const auto flat = work_dir() / "single_flat.blg";

    const auto result = run_cli("extract-midi " + midi.string() + " " + sharp.string() + " "
                                + flat.string());
    REQUIRE(result.exit_code == 0);

    const auto lines = result.json_lines();
    REQUIRE(lines.size() == 1);
    CHECK(lines[0]["width"] == 1);
    CHECK(lines[0]["command"] == "extract-midi");

    CHECK(bootleg::load_bootleg(sharp).score.width() == 1);
    CHECK(bootleg::load_bootleg(flat).score.width() == 1);
    CHECK(bootleg::load_bootleg(sharp).score.variant() == bootleg::Variant::Sharp);
    CHECK(bootleg::load_bootleg(flat).score.variant() == bootleg::Variant::Flat);
}

TEST_CASE("extract-midi on a note-free file warns and writes width-0 scores")
{
    fixtures::MidiBuilder builder; // header + empty track
    const auto midi = write_midi("empty.mid", builder);
    const auto sharp = work_dir() / "empty_sharp.blg";
    const auto flat = work_dir() / "empty_flat.blg";

    const auto result = run_cli("extract-midi " + midi.string() + " " + sharp.string() + " "
                                + flat.string());
    REQUIRE(result.exit_code == 0);
    CHECK(result.err.find("width-0") != std::string::npos);
    CHECK(bootleg::load_bootleg(sharp).score.width() == 0);
}

TEST_CASE("extract-midi on a corrupt file exits 1 and leaves no partial outputs")
{
    const auto midi = work_dir() / "corrupt.mid";
    std::ofstream(midi, std::ios::binary) << "MThd garbage that is not midi";
    const auto sharp = work_dir() / "corrupt_sharp.blg";
    const auto flat = work_dir() / "corrupt_flat.blg";

    const auto result = run_cli("extract-midi " + midi.string() + " " + sharp.string() + " "
                                + flat.string());
    CHECK(result.exit_code == 1);
    CHECK(!result.err.empty());
    CHECK(!fs::exists(sharp));
    CHECK(!fs::exists(flat));
}

TEST_CASE("extract-sheet concatenates pages, tolerating blank ones")
{
    bootleg::Rng rng(5);
    fixtures::RenderSpec spec;
    spec.n_systems = 2;
    spec.events_per_system = 6;
    const auto page1 = fixtures::render_page(spec, rng);
    const auto page2 = fixtures::render_page(spec, rng);
    const auto p1 = work_dir() / "page1.png";
    const auto p2 = work_dir() / "page2.png";
    const auto blank = work_dir() / "blank.png";
    cv::imwrite(p1.string(), page1.image);
    cv::imwrite(p2.string(), page2.image);
    cv::imwrite(blank.string(), cv::Mat(400, 600, CV_8UC1, cv::Scalar(255)));

    const auto out = work_dir() / "piece.blg";
    const auto result = run_cli("extract-sheet --out " + out.string() + " " + p1.string() + " "
                                + blank.string() + " " + p2.string());
    REQUIRE(result.exit_code == 0);

    const auto lines = result.json_lines();
    REQUIRE(lines.size() == 1);
    const auto& pages = lines[0]["pages"];
    REQUIRE(pages.size() == 3);
    CHECK(pages[1]["width"] == 0);
    CHECK(pages[1]["error"] != "");
    CHECK(lines[0]["width"].get<std::size_t>()
          == pages[0]["width"].get<std::size_t>() + pages[2]["width"].get<std::size_t>());
    CHECK(bootleg::load_bootleg(out).score.width() == lines[0]["width"].get<std::size_t>());

    SECTION("debug overlays are written when requested")
    {
        const auto overlays = work_dir() / "overlays";
        const auto r2 = run_cli("extract-sheet --out " + out.string() + " --debug-overlays "
                                + overlays.string() + " " + p1.string());
        REQUIRE(r2.exit_code == 0);
        CHECK(fs::exists(overlays / "page1_overlay.png"));
    }
}

TEST_CASE("extract-sheet dump-config round-trips through the strict loader")
{
    const auto result = run_cli("extract-sheet --dump-config");
    REQUIRE(result.exit_code == 0);
    const auto config_path = work_dir() / "sheet.cfg";
    std::ofstream(config_path) << result.out;
    CHECK_NOTHROW(bootleg::load_hyperparams(config_path));
}

TEST_CASE("extract-sheet with a missing config key names it and its default")
{
    auto text = bootleg::default_hyperparams_text();
    const auto pos = text.find("column_merge_width_frac");
    REQUIRE(pos != std::string::npos);
    text.erase(pos, text.find('\n', pos) - pos + 1);
    const auto config_path = work_dir() / "incomplete.cfg";
    std::ofstream(config_path) << text;

    bootleg::Rng rng(6);
    fixtures::RenderSpec spec;
    const auto page = fixtures::render_page(spec, rng);
    const auto p = work_dir() / "cfgpage.png";
    cv::imwrite(p.string(), page.image);

    const auto result = run_cli("extract-sheet --config " + config_path.string() + " --out "
                                + (work_dir() / "x.blg").string() + " " + p.string());
    CHECK(result.exit_code == 1);
    CHECK(result.err.find("column_merge_width_frac") != std::string::npos);
    CHECK(result.err.find("default") != std::string::npos);
}

TEST_CASE("build-index and query: end-to-end self retrieval")
{
    // ten distinct pieces from ten MIDI files; the database indexes the
    // sharp-variant bootlegs
    std::vector<fs::path> sharp_files;
    std::vector<fs::path> midi_files;
    for (int i = 0; i < 10; ++i) {
        const auto midi = write_midi("piece" + std::to_string(i) + ".mid",
                                     random_melody(1000 + static_cast<std::uint64_t>(i)));
        const auto sharp = work_dir() / ("piece" + std::to_string(i) + "_s.blg");
        const auto flat = work_dir() / ("piece" + std::to_string(i) + "_f.blg");
        const auto r = run_cli("extract-midi " + midi.string() + " " + sharp.string() + " "
                               + flat.string());
        REQUIRE(r.exit_code == 0);
        sharp_files.push_back(sharp);
        midi_files.push_back(midi);
    }

    const auto manifest = work_dir() / "db.tsv";
    {
        std::ofstream out(manifest);
        for (int i = 0; i < 10; ++i) {
            out << "piece" << i << "\t" << sharp_files[static_cast<std::size_t>(i)].string()
                << "\n";
        }
    }

    const auto index_path = work_dir() / "db.idx";
    const auto build = run_cli("build-index " + manifest.string() + " --out "
                               + index_path.string());
    REQUIRE(build.exit_code == 0);
    const auto build_json = build.json_lines();
    REQUIRE(build_json.size() == 1);
    CHECK(build_json[0]["pieces"] == 10);
    CHECK(build_json[0]["escalated_count"] == 0);

    SECTION("query ranks its own piece first")
    {
        const auto result = run_cli("query " + index_path.string() + " "
                                    + midi_files[3].string());
        REQUIRE(result.exit_code == 0);
        for (const auto& line : result.json_lines()) {
            if (line["type"] == "combined" && line["rank"] == 1) {
                CHECK(line["piece"] == "piece3");
                CHECK(line["score"].get<int>() > 0);
            }
        }
    }

    SECTION("--top-k bounds the combined ranking")
    {
        const auto result = run_cli("query " + index_path.string() + " " + midi_files[0].string()
                                    + " --top-k 3");
        REQUIRE(result.exit_code == 0);
        int combined = 0;
        for (const auto& line : result.json_lines()) {
            if (line["type"] == "combined") {
                ++combined;
            }
        }
        CHECK(combined == 3);
    }

    SECTION("segment length beyond the query width degenerates to one segment")
    {
        const auto result = run_cli("query " + index_path.string() + " " + midi_files[0].string()
                                    + " --segment-length 100000");
        REQUIRE(result.exit_code == 0);
        std::size_t n_segments = 0;
        for (const auto& line : result.json_lines()) {
            if (line["type"] == "segment") {
                n_segments = std::max(n_segments, line["segment"].get<std::size_t>() + 1);
            }
        }
        CHECK(n_segments == 1);
    }

    SECTION("duplicate piece id in the manifest is rejected")
    {
        const auto bad = work_dir() / "bad.tsv";
        std::ofstream(bad) << "p\t" << sharp_files[0].string() << "\n"
                           << "p\t" << sharp_files[1].string() << "\n";
        const auto result = run_cli("build-index " + bad.string() + " --out "
                                    + (work_dir() / "bad.idx").string());
        CHECK(result.exit_code == 1);
    }

    SECTION("empty manifest is rejected")
    {
        const auto empty = work_dir() / "empty.tsv";
        std::ofstream(empty) << "";
        const auto result = run_cli("build-index " + empty.string() + " --out "
                                    + (work_dir() / "e.idx").string());
        CHECK(result.exit_code == 1);
    }
}

TEST_CASE("build-index --threshold 1 escalates a repeated column")
{
    // a piece whose bootleg repeats one column
    fixtures::MidiBuilder builder;
    for (int i = 0; i < 5; ++i) {
        builder.note_on(i == 0 ? 0 : 480, 60, 90);
    }
    const auto midi = write_midi("repeat.mid", builder);
    const auto sharp = work_dir() / "repeat_s.blg";
    const auto flat = work_dir() / "repeat_f.blg";
    REQUIRE(run_cli("extract-midi " + midi.string() + " " + sharp.string() + " " + flat.string())
                .exit_code
            == 0);

    const auto manifest = work_dir() / "repeat.tsv";
    std::ofstream(manifest) << "repeat\t" << sharp.string() << "\n";
    const auto index_path = work_dir() / "repeat.idx";
    const auto result = run_cli("build-index " + manifest.string() + " --out "
                                + index_path.string() + " --threshold 1");
    REQUIRE(result.exit_code == 0);
    CHECK(result.json_lines()[0]["escalated_count"] == 1);

    const auto index = bootleg::load_index(index_path);
    CHECK(index.is_escalated(bootleg::pack_column(
                                 bootleg::Column().set(23).set(33))
                                 .value()));
}

TEST_CASE("evaluate: clean synthetic corpus reaches MRR 1.0 deterministically")
{
    // two clean pieces; no noise so the synthesized database equals the
    // MIDI sharp bootlegs
    const auto midi_a = write_midi("eval_a.mid", random_melody(42, 80));
    const auto midi_b = write_midi("eval_b.mid", random_melody(43, 80));
    const auto gt = work_dir() / "gt.tsv";
    std::ofstream(gt) << midi_a.string() << "\tpieceA\n" << midi_b.string() << "\tpieceB\n";

    const auto prefix = work_dir() / "report";
    const auto config = work_dir() / "eval.cfg";
    std::ofstream(config) << "ground_truth = " << gt.string() << "\n"
                          << "output_prefix = " << prefix.string() << "\n"
                          << "db_sizes = 2\n"
                          << "query_lengths = full\n"
                          << "trials = 1\n"
                          << "samples_per_midi = 2\n"
                          << "seed = 9\n"
                          << "noise_p_del = 0\n"
                          << "noise_p_flip = 0\n";

    const auto result = run_cli("evaluate " + config.string());
    REQUIRE(result.exit_code == 0);
    const auto lines = result.json_lines();
    REQUIRE(lines.size() == 1);
    REQUIRE(lines[0]["cells"].size() == 1);
    CHECK(lines[0]["cells"][0]["mean_mrr"] == 1.0);

    const auto csv_once = slurp(fs::path(prefix.string() + ".csv"));
    CHECK(csv_once.find("2,full,0,1.000000") != std::string::npos);

    SECTION("same seed twice gives byte-identical CSV")
    {
        const auto again = run_cli("evaluate " + config.string());
        REQUIRE(again.exit_code == 0);
        CHECK(slurp(fs::path(prefix.string() + ".csv")) == csv_once);
    }

    SECTION("db size beyond the corpus is a config error")
    {
        const auto bad_config = work_dir() / "bad_eval.cfg";
        std::ofstream(bad_config) << "ground_truth = " << gt.string() << "\n"
                                  << "output_prefix = " << prefix.string() << "\n"
                                  << "db_sizes = 5\n"
                                  << "trials = 1\n";
        const auto bad = run_cli("evaluate " + bad_config.string());
        CHECK(bad.exit_code == 1);
        CHECK(bad.err.find("db_size") != std::string::npos);
    }
}
