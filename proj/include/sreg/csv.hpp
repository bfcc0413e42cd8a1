#pragma once

#include "sreg/types.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sreg::csv {

/// Shortest representation that round-trips to the same double.
inline std::string format(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline double parse_double(const std::string& s, std::string_view what) {
    double v = 0.0;
    auto first = s.data();
    auto last = s.data() + s.size();
    while (first != last && *first == ' ') ++first;
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw Error("cannot parse '" + s + "' as a number in " + std::string(what));
    }
    return v;
}

/// In-memory CSV table with a header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] int column(std::string_view name) const {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (header[j] == name) return static_cast<int>(j);
        }
        return -1;
    }

    [[nodiscard]] int require_column(std::string_view name, std::string_view file) const {
        int j = column(name);
        if (j < 0) throw Error(std::string(file) + ": missing column '" + std::string(name) + "'");
        return j;
    }
};

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": empty file");
    t.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        if (fields.size() != t.header.size()) {
            throw Error(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    return t;
}

/// Row-at-a-time writer.
class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw Error("cannot write " + path);
        out_.precision(17);
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((emit(cells, first)), ...);
        out_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j) out_ << ',';
            out_ << cells[j];
        }
        out_ << '\n';
    }

private:
    template <class T>
    void emit(const T& v, bool& first) {
        if (!first) out_ << ',';
        first = false;
        if constexpr (std::is_floating_point_v<T>) {
            out_ << format(static_cast<double>(v));
        } else {
            out_ << v;
        }
    }

    std::ofstream out_;
};

}  // namespace sreg::csv
