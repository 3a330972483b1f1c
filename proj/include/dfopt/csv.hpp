#pragma once
// CSV ingestion for base data sets: header row, ',' delimiter, "\N" for absent.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dfopt/value.hpp"

namespace dfopt {

struct ColumnSpec {
    std::string name;
    ValueTag type = ValueTag::int64;
};

namespace csv_detail {

inline std::vector<std::string> split_row(const std::string& line, std::size_t lineno) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw ValidationError("csv line " + std::to_string(lineno) + ": unterminated quote");
    cells.push_back(std::move(cur));
    return cells;
}

inline Value parse_cell(const std::string& cell, ValueTag type, std::size_t lineno) {
    auto fail = [&] {
        return ValidationError("csv line " + std::to_string(lineno) + ": cannot read '" + cell + "' as " +
                               tag_name(type));
    };
    if (cell == "\\N") return Value::absent();
    switch (type) {
    case ValueTag::int64: {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || p != cell.data() + cell.size()) throw fail();
        return Value(v);
    }
    case ValueTag::float64: {
        try {
            std::size_t used = 0;
            double v = std::stod(cell, &used);
            if (used != cell.size()) throw fail();
            return Value(v);
        } catch (const std::logic_error&) {
            throw fail();
        }
    }
    case ValueTag::boolean:
        if (cell == "true" || cell == "1") return Value(true);
        if (cell == "false" || cell == "0") return Value(false);
        throw fail();
    case ValueTag::string: return Value(cell);
    case ValueTag::absent: break;
    }
    throw fail();
}

inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace csv_detail

inline std::vector<Record> read_csv(std::istream& in, const std::vector<ColumnSpec>& schema) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ValidationError("csv: missing header row");
    auto header = csv_detail::split_row(line, lineno);
    if (header.size() != schema.size())
        throw ValidationError("csv header has " + std::to_string(header.size()) + " columns, schema has " +
                              std::to_string(schema.size()));
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] != schema[i].name)
            throw ValidationError("csv header column " + std::to_string(i) + " is '" + header[i] + "', expected '" +
                                  schema[i].name + "'");
    std::vector<Record> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = csv_detail::split_row(line, lineno);
        if (cells.size() != schema.size())
            throw ValidationError("csv line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(schema.size()) + " cells, got " + std::to_string(cells.size()));
        Record r;
        for (std::size_t i = 0; i < cells.size(); ++i)
            r.values.push_back(csv_detail::parse_cell(cells[i], schema[i].type, lineno));
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<Record> read_csv_file(const std::string& path, const std::vector<ColumnSpec>& schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open csv file '" + path + "'");
    return read_csv(in, schema);
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header, const std::vector<Record>& rows) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << csv_detail::quote(header[i]);
    out << "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.arity(); ++i)
            out << (i ? "," : "") << (r[i].is_string() ? csv_detail::quote(r[i].as_string()) : r[i].to_string());
        out << "\n";
    }
}

} // namespace dfopt
