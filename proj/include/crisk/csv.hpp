#pragma once

#include "crisk/common.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace crisk::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw Error("missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (ch == '"') {
            if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else {
                quoted = !quoted;
            }
        } else if (ch == ',' && !quoted) {
            out.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    out.push_back(cell);
    return out;
}

/// Reads a header + rows CSV. Blank lines are skipped; ragged rows are an error.
inline Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file '" + path.string() + "'");
    Table t;
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (first) {
            if (!cells.empty() && cells[0].size() >= 3 && cells[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
                cells[0].erase(0, 3);
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size())
            throw Error("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                        " cells, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (first) throw Error("empty file '" + path.string() + "'");
    return t;
}

inline double to_number(const std::string& cell, std::size_t row, const std::string& col) {
    double v;
    if (!parse_double(cell, v))
        throw Error("non-numeric cell '" + cell + "' in column '" + col + "' (row " + std::to_string(row + 1) + ")");
    return v;
}

/// Minimal row writer; numbers are written with shortest round-trip formatting.
class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw Error("cannot write file '" + path.string() + "'");
    }
    explicit Writer(std::ostream& os) : external_(&os) {}

    Writer& row(const std::vector<std::string>& cells) {
        auto& os = stream();
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j) os << ',';
            write_cell(os, cells[j]);
        }
        os << '\n';
        return *this;
    }

    std::ostream& stream() { return external_ ? *external_ : out_; }

private:
    static void write_cell(std::ostream& os, const std::string& cell) {
        if (cell.find_first_of(",\"\n") == std::string::npos) {
            os << cell;
            return;
        }
        os << '"';
        for (char c : cell) {
            if (c == '"') os << '"';
            os << c;
        }
        os << '"';
    }

    std::ofstream out_;
    std::ostream* external_ = nullptr;
};

inline std::string num(double x) { return format_double(x); }
inline std::string num(std::size_t x) { return std::to_string(x); }
inline std::string num(int x) { return std::to_string(x); }

}  // namespace crisk::csv
