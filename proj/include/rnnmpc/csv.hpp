#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rnnmpc::csv {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

double parse_double(std::string_view s);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Reads a whole file; throws DataError naming the path if it cannot be opened.
std::string read_file(const std::string& path);

/// Writes a file, creating parent directories.
void write_file(const std::string& path, std::string_view content);

} // namespace rnnmpc::csv
