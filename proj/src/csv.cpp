#include "mobnet/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "mobnet/error.hpp"

namespace mobnet::csv {

std::size_t Table::column(std::string_view name) const {
    if (auto idx = find_column(name)) return *idx;
    throw InputError("missing column '" + std::string(name) + "'");
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

namespace {

std::string_view trim_eol(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

}  // namespace

Table parse(std::istream& in) {
    Table table;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = trim_eol(line);
        // UTF-8 byte order mark
        if (lineno == 1 && view.size() >= 3 && view.substr(0, 3) == "\xEF\xBB\xBF")
            view.remove_prefix(3);
        if (view.empty()) continue;
        if (!have_header) {
            table.header = split_line(view);
            have_header = true;
            continue;
        }
        table.rows.push_back(split_line(view));
        table.lines.push_back(lineno);
    }
    if (!have_header) throw InputError("empty table: no header line");
    return table;
}

Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    try {
        return parse(in);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << escape(fields[i]);
    }
    out_ << '\n';
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

std::optional<int> parse_optional_int(std::string_view field) {
    if (field.empty()) return std::nullopt;
    int value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw InputError("not an integer: '" + std::string(field) + "'");
    return value;
}

std::optional<double> parse_optional_double(std::string_view field) {
    if (field.empty()) return std::nullopt;
    double value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw InputError("not a number: '" + std::string(field) + "'");
    return value;
}

int parse_int(std::string_view field, std::string_view what) {
    auto v = parse_optional_int(field);
    if (!v) throw InputError("missing " + std::string(what));
    return *v;
}

double parse_double(std::string_view field, std::string_view what) {
    auto v = parse_optional_double(field);
    if (!v) throw InputError("missing " + std::string(what));
    return *v;
}

}  // namespace mobnet::csv
