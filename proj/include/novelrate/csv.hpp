#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "novelrate/errors.hpp"

namespace novelrate::csv {

// Splits one CSV line. Handles double-quoted fields with embedded commas and
// doubled quotes; no embedded newlines (none of our formats need them).
inline std::vector<std::string> split_line(const std::string& line, long line_no) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw MalformedRow("unterminated quote", line_no);
    out.push_back(field);
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<long> line_numbers;  // source line of each row
};

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    Table t;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = split_line(line, line_no);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            if (fields.size() != t.header.size())
                throw MalformedRow("expected " + std::to_string(t.header.size()) +
                                       " fields, got " + std::to_string(fields.size()),
                                   line_no);
            t.rows.push_back(std::move(fields));
            t.line_numbers.push_back(line_no);
        }
    }
    if (t.header.empty()) throw EmptyFile(path);
    return t;
}

inline void expect_header(const Table& t, const std::vector<std::string>& names,
                          const std::string& path) {
    if (t.header != names) {
        std::string want;
        for (const auto& n : names) want += (want.empty() ? "" : ",") + n;
        std::string got;
        for (const auto& n : t.header) got += (got.empty() ? "" : ",") + n;
        throw Error(path + ": expected header '" + want + "', got '" + got + "'");
    }
}

inline long long parse_int(const std::string& s, long line_no) {
    size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw MalformedRow("not an integer: '" + s + "'", line_no);
    }
    if (pos != s.size()) throw MalformedRow("not an integer: '" + s + "'", line_no);
    return v;
}

inline double parse_real(const std::string& s, long line_no) {
    size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw MalformedRow("not a number: '" + s + "'", line_no);
    }
    if (pos != s.size()) throw MalformedRow("not a number: '" + s + "'", line_no);
    return v;
}

// Field needing quoting is wrapped and inner quotes doubled.
inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace novelrate::csv
