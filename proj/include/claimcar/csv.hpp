#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace claimcar::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index for `name`, or -1.
    int column(std::string_view name) const;
    // Column index or throws naming the missing column.
    std::size_t require_column(std::string_view name, std::string_view file) const;
};

// Reads a UTF-8 CSV file with a header row. Handles quoted fields with ""
// escapes; embedded newlines inside quotes are rejected. Throws
// std::runtime_error with the file name and line number on malformed input.
Table read_file(const std::string& path);

// Parses one CSV record (no trailing newline).
std::vector<std::string> split_record(std::string_view line, std::size_t line_no,
                                      const std::string& context);

// Locale-independent numeric parsing; nullopt when the cell does not parse
// completely.
std::optional<double> parse_double(std::string_view cell);
std::optional<std::int64_t> parse_int(std::string_view cell);

// Shortest round-trip representation of a double (to_chars).
std::string format_double(double v);

// Quotes a field if it contains separators, quotes or leading/trailing space.
std::string escape_field(std::string_view field);

}  // namespace claimcar::csv
