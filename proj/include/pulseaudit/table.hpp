#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pulseaudit/common.hpp"
#include "pulseaudit/csv.hpp"

namespace pulseaudit {

/// One analysed window: provenance plus named numeric columns (features and
/// labels alike). Missing values are simply absent.
struct Observation {
    std::string patient_id;
    std::string record_id;
    std::size_t start = 0;
    std::map<std::string, double> values;

    std::optional<double> get(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) return std::nullopt;
        return it->second;
    }
};

/// Window table CSV: patient_id,record_id,window_start,<columns...>; empty
/// cells mean missing.
struct Table {
    std::vector<std::string> columns;
    std::vector<Observation> rows;

    bool has_column(const std::string& name) const {
        return std::find(columns.begin(), columns.end(), name) != columns.end();
    }

    /// Values of a column for every row, failing on the first missing cell.
    std::vector<double> column(const std::string& name) const {
        require(has_column(name), ErrorKind::MissingLabel, "table has no column '" + name + "'");
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) {
            const auto v = r.get(name);
            require(v.has_value(), ErrorKind::MissingLabel,
                    "window " + r.record_id + "@" + std::to_string(r.start) + " has no value for '" + name + "'");
            out.push_back(*v);
        }
        return out;
    }
};

inline void write_table(const Table& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::MissingFile, path);
    out << "patient_id,record_id,window_start";
    for (const auto& c : t.columns) out << ',' << c;
    out << '\n';
    for (const auto& r : t.rows) {
        out << r.patient_id << ',' << r.record_id << ',' << r.start;
        for (const auto& c : t.columns) {
            out << ',';
            if (auto v = r.get(c)) out << csv::format_double(*v);
        }
        out << '\n';
    }
}

inline Table read_table(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require(!lines.empty(), ErrorKind::MalformedInput, path + ": empty table");
    const auto header = csv::split(lines.front());
    require(header.size() >= 3 && header[0] == "patient_id" && header[1] == "record_id" && header[2] == "window_start",
            ErrorKind::MalformedInput, path + ": header must start with patient_id,record_id,window_start");
    Table t;
    for (std::size_t i = 3; i < header.size(); ++i) t.columns.emplace_back(header[i]);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (csv::trim(lines[ln]).empty()) continue;
        const auto f = csv::split(lines[ln]);
        const std::string where = path + ": line " + std::to_string(ln + 1);
        require(f.size() == header.size(), ErrorKind::MalformedInput, where + " has the wrong number of fields");
        Observation o;
        o.patient_id = std::string(f[0]);
        o.record_id = std::string(f[1]);
        const auto start = csv::parse_double(f[2]);
        require(start && *start >= 0 && std::floor(*start) == *start, ErrorKind::MalformedInput,
                where + ": bad window_start");
        o.start = static_cast<std::size_t>(*start);
        for (std::size_t i = 3; i < f.size(); ++i) {
            if (f[i].empty()) continue;
            const auto v = csv::parse_double(f[i]);
            require(v && std::isfinite(*v), ErrorKind::MalformedInput,
                    where + ": bad value in column '" + std::string(header[i]) + "'");
            o.values[std::string(header[i])] = *v;
        }
        t.rows.push_back(std::move(o));
    }
    return t;
}

}  // namespace pulseaudit
