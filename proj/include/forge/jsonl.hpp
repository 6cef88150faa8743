#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "forge/util.hpp"

namespace forge {

/// Parse a JSON Lines file; blank lines are skipped. Parse failures report
/// the 1-based line number.
inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read file: " + path.string());
    }
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& ex) {
            throw InputError(path.string() + ":" + std::to_string(lineno) +
                             ": invalid JSON: " + ex.what());
        }
    }
    return rows;
}

/// Serialize one object per line and write atomically.
inline void write_jsonl_atomic(const std::filesystem::path& path,
                               const std::vector<nlohmann::json>& rows) {
    std::ostringstream out;
    for (const auto& row : rows) {
        out << row.dump() << '\n';
    }
    write_file_atomic(path, out.str());
}

}  // namespace forge
