#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bootleg/errors.hpp"

namespace bootleg {

/// Simple `key = value` text file with '#' comments. Values keep internal
/// whitespace (lists are space-separated); keys are unique.
class KeyValueFile {
public:
    static KeyValueFile parse_text(const std::string& text, const std::string& origin = "<string>")
    {
        KeyValueFile kv;
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            const auto trimmed = trim(line);
            if (trimmed.empty()) {
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(line_no)
                                  + ": expected `key = value`");
            }
            const auto key = trim(trimmed.substr(0, eq));
            const auto value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
            }
            if (kv.values_.contains(key)) {
                throw ConfigError(origin + ": duplicate key `" + key + "`");
            }
            kv.values_[key] = value;
        }
        return kv;
    }

    static KeyValueFile parse_file(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file: " + path.string());
        }
        std::stringstream buffer;
        buffer << in.rdbuf();
        return parse_text(buffer.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    const std::string& get(const std::string& key, const std::string& documented_default) const
    {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            throw ConfigError("missing config key `" + key + "` (documented default: "
                              + documented_default + ")");
        }
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double documented_default) const
    {
        return to_double(key, get(key, format_double(documented_default)));
    }

    std::int64_t get_int(const std::string& key, std::int64_t documented_default) const
    {
        return to_int(key, get(key, std::to_string(documented_default)));
    }

    bool get_bool(const std::string& key, bool documented_default) const
    {
        const auto& v = get(key, documented_default ? "true" : "false");
        if (v == "true" || v == "1") {
            return true;
        }
        if (v == "false" || v == "0") {
            return false;
        }
        throw ConfigError("key `" + key + "`: expected true/false, got `" + v + "`");
    }

    double get_double_or(const std::string& key, double fallback) const
    {
        return has(key) ? to_double(key, values_.at(key)) : fallback;
    }

    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const
    {
        return has(key) ? to_int(key, values_.at(key)) : fallback;
    }

    std::vector<std::string> get_list_or(const std::string& key,
                                         const std::vector<std::string>& fallback) const
    {
        if (!has(key)) {
            return fallback;
        }
        std::istringstream in(values_.at(key));
        std::vector<std::string> out;
        std::string item;
        while (in >> item) {
            out.push_back(item);
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Keys present in the file but not in `known`; used by strict schemas
    /// to reject typos.
    std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const
    {
        std::vector<std::string> out;
        for (const auto& [key, value] : values_) {
            if (std::find(known.begin(), known.end(), key) == known.end()) {
                out.push_back(key);
            }
        }
        return out;
    }

    static std::string format_double(double v)
    {
        std::ostringstream out;
        out << v;
        return out.str();
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto begin = s.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) {
            return "";
        }
        const auto end = s.find_last_not_of(" \t\r\n");
        return s.substr(begin, end - begin + 1);
    }

    double to_double(const std::string& key, const std::string& v) const
    {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) {
                throw std::invalid_argument(v);
            }
            return d;
        } catch (const std::exception&) {
            throw ConfigError("key `" + key + "`: expected a number, got `" + v + "`");
        }
    }

    std::int64_t to_int(const std::string& key, const std::string& v) const
    {
        try {
            std::size_t used = 0;
            const std::int64_t i = std::stoll(v, &used);
            if (used != v.size()) {
                throw std::invalid_argument(v);
            }
            return i;
        } catch (const std::exception&) {
            throw ConfigError("key `" + key + "`: expected an integer, got `" + v + "`");
        }
    }

    std::map<std::string, std::string> values_;
};

} // namespace bootleg
