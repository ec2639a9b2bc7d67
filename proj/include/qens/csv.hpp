#pragma once

// Minimal comma-separated reader/writer for the flat, unquoted tables used by
// the toolkit. Fields never contain commas, quotes or newlines.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qens/errors.hpp"

namespace qens::csv {

struct Row {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

class Table {
public:
    Table(std::string source, std::vector<std::string> header, std::vector<Row> rows)
        : source_(std::move(source)), header_(std::move(header)), rows_(std::move(rows)) {}

    const std::string& source() const noexcept { return source_; }
    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<Row>& rows() const noexcept { return rows_; }

    /// Column index by name; throws ParseError on the header line when absent.
    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (header_[i] == name) {
                return i;
            }
        }
        throw ParseError(source_, 1, "missing column '" + std::string(name) + "'");
    }

private:
    std::string source_;
    std::vector<std::string> header_;
    std::vector<Row> rows_;
};

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

inline Table read(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    std::vector<Row> rows;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        if (line.empty()) {
            continue;
        }
        auto fields = split(line);
        if (!have_header) {
            header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != header.size()) {
            throw ParseError(source, lineno,
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        }
        rows.push_back(Row{lineno, std::move(fields)});
    }
    if (!have_header) {
        throw ParseError(source, 1, "missing header row");
    }
    return Table(source, std::move(header), std::move(rows));
}

inline Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return read(in, path.string());
}

/// Parses a finite decimal real; `NA` is not accepted here.
inline double parse_double(std::string_view text, const std::string& source, std::size_t line) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        throw ParseError(source, line, "not a number: '" + std::string(text) + "'");
    }
    return value;
}

inline long parse_int(std::string_view text, const std::string& source, std::size_t line) {
    long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError(source, line, "not an integer: '" + std::string(text) + "'");
    }
    return value;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double value) {
    if (std::isnan(value)) {
        return "NA";
    }
    if (std::isinf(value)) {
        return value > 0 ? "Inf" : "-Inf";
    }
    if (value == 0.0) {
        return "0";  // folds -0 as well
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

inline std::string format_optional(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string("NA");
}

/// Accumulates rows and writes them in one go.
class Writer {
public:
    explicit Writer(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> fields) { rows_.push_back(std::move(fields)); }

    void write(std::ostream& out) const {
        write_line(out, header_);
        for (const auto& r : rows_) {
            write_line(out, r);
        }
    }

    void write_file(const std::filesystem::path& path) const {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw DataError("cannot write '" + path.string() + "'");
        }
        write(out);
    }

    std::string str() const {
        std::ostringstream os;
        write(os);
        return os.str();
    }

private:
    static void write_line(std::ostream& out, const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) {
                out << ',';
            }
            out << fields[i];
        }
        out << '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace qens::csv
