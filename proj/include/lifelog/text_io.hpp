#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lifelog {

std::vector<std::string_view> split(std::string_view line, char sep);
std::string join(std::span<const std::string> parts, char sep);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);
// Strict: the whole field must be a finite or infinite decimal number.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

// Reads a whole text file into lines, stripping '\r'. Throws RuntimeFailure
// when the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string trim(std::string_view s);

}  // namespace lifelog
