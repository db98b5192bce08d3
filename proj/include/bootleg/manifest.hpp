#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "bootleg/errors.hpp"

namespace bootleg {

/// Database manifest line: `piece_id<TAB>bootleg_path`.
struct ManifestEntry {
    std::string piece_id;
    std::filesystem::path bootleg_path;
};

/// Ground-truth manifest line: `midi_path<TAB>piece_id`.
struct GroundTruthEntry {
    std::filesystem::path midi_path;
    std::string piece_id;
};

namespace detail {

    inline std::vector<std::pair<std::string, std::string>>
    read_tsv_pairs(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open manifest: " + path.string());
        }
        std::vector<std::pair<std::string, std::string>> out;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty() || line[0] == '#') {
                continue;
            }
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw ConfigError(path.string() + ":" + std::to_string(line_no)
                                  + ": expected two tab-separated fields");
            }
            out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
        }
        return out;
    }

    /// Relative manifest paths resolve against the manifest's directory.
    inline std::filesystem::path resolve(const std::filesystem::path& manifest,
                                         const std::string& p)
    {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : manifest.parent_path() / path;
    }

} // namespace detail

inline std::vector<ManifestEntry> parse_database_manifest(const std::filesystem::path& path)
{
    std::vector<ManifestEntry> out;
    std::unordered_set<std::string> seen;
    for (const auto& [piece_id, bootleg_path] : detail::read_tsv_pairs(path)) {
        if (!seen.insert(piece_id).second) {
            throw ConfigError("duplicate piece id `" + piece_id + "` in " + path.string());
        }
        out.push_back({ piece_id, detail::resolve(path, bootleg_path) });
    }
    return out;
}

inline std::vector<GroundTruthEntry> parse_ground_truth_manifest(const std::filesystem::path& path)
{
    std::vector<GroundTruthEntry> out;
    for (const auto& [midi_path, piece_id] : detail::read_tsv_pairs(path)) {
        out.push_back({ detail::resolve(path, midi_path), piece_id });
    }
    return out;
}

} // namespace bootleg
