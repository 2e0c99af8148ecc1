#pragma once

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

namespace mdl::io {

// Writes to "<path>.tmp" and renames over `path`, so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// Throws ConfigError naming the first key of `j` not in `known`.
void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace mdl::io
