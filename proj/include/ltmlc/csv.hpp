#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ltmlc::csv {

using Row = std::vector<std::string>;

/// Splits one line. Fields may be double-quoted; "" inside quotes is a literal quote.
Row parse_line(std::string_view line);

/// Reads every non-empty line of a file. Throws ParseError if the file cannot be opened.
std::vector<Row> read_file(const std::string& path);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);
std::string join(const Row& fields);

/// Shortest round-trip-safe rendering with 17 significant digits.
std::string format_real(double value);
/// Strict conversion; throws ParseError naming `context` on failure.
double parse_real(std::string_view text, std::string_view context);

}  // namespace ltmlc::csv
