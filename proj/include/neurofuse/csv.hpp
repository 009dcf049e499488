#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neurofuse::csv {

/// Minimal comma-separated table: header plus rows of raw cells. No quoting support;
/// none of the formats here carry commas inside fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws DataError if absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split(std::string_view line, char sep = ',');

Table read(const std::filesystem::path& path);

/// Throws DataError with `context` when the cell is not a finite number.
double parse_double(std::string_view cell, std::string_view context);
std::optional<double> parse_optional(std::string_view cell, std::string_view context);
long long parse_int(std::string_view cell, std::string_view context);

/// Shortest round-trip decimal representation.
std::string format(double value);

}  // namespace neurofuse::csv
