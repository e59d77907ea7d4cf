#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace grimp {

// Minimal RFC 4180 reader/writer: comma separated, optional double quotes,
// LF or CRLF input, LF output.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position of `name` in the header, if present.
  std::optional<std::size_t> column(std::string_view name) const;
};

// Rows with a different field count than the header raise DataError naming
// the row (1-based, header is row 1).
CsvTable parse_csv(std::string_view text, std::string_view source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
// Strict parse of a whole field; nullopt when it is not a number.
std::optional<double> parse_double(std::string_view field);

}  // namespace grimp
