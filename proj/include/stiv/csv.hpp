#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stiv/errors.hpp"

namespace stiv {

/// Header row plus a numeric matrix, comma separated, '.' decimal point.
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;

    Eigen::Index column(const std::string& name) const
    {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<Eigen::Index>(j);
        fail(ErrorCode::ParseError, "column '" + name + "' not found");
    }
};

inline CsvTable read_csv(std::istream& is, const std::string& origin = "<stream>")
{
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) fail(ErrorCode::ParseError, origin + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const char* begin = cell.c_str();
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin || *end != '\0')
                fail(ErrorCode::ParseError,
                     origin + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != t.header.size())
            fail(ErrorCode::ParseError, origin + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return t;
}

inline CsvTable read_csv_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) fail(ErrorCode::IoError, "cannot open " + path);
    return read_csv(is, path);
}

/// Doubles are written with 17 significant digits so that a write/read cycle
/// is bit-identical.
inline void write_csv(std::ostream& os, const CsvTable& t)
{
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (j) os << ',';
        os << t.header[j];
    }
    os << '\n';
    char buf[64];
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.values.cols(); ++j) {
            if (j) os << ',';
            std::snprintf(buf, sizeof buf, "%.17g", t.values(i, j));
            os << buf;
        }
        os << '\n';
    }
}

inline void write_csv_file(const std::string& path, const CsvTable& t)
{
    std::ofstream os(path);
    if (!os) fail(ErrorCode::IoError, "cannot open " + path);
    write_csv(os, t);
}

} // namespace stiv
