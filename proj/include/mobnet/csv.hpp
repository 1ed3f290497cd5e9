#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mobnet::csv {

// A header-indexed, comma separated table. Fields may be double-quoted;
// embedded quotes are doubled. Empty fields are kept as empty strings.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // 1-based source line of each row, for error messages.
    std::vector<std::size_t> lines;

    // Index of a column; throws InputError when absent.
    std::size_t column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line);

Table parse(std::istream& in);
Table read_file(const std::filesystem::path& path);

// Quotes a field only when it contains a delimiter, a quote or a newline.
std::string escape(std::string_view field);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

// Shortest decimal representation that round-trips the double.
std::string format_number(double value);

std::optional<int> parse_optional_int(std::string_view field);
std::optional<double> parse_optional_double(std::string_view field);
int parse_int(std::string_view field, std::string_view what);
double parse_double(std::string_view field, std::string_view what);

}  // namespace mobnet::csv
