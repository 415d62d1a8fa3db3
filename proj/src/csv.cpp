#include "ldpexit/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ldp {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

namespace {

std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    line += '\n';
    return line;
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()), body_(join(header)) {}

void CsvWriter::add_row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    add_row(cells);
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::invalid_argument("CsvWriter: row has the wrong number of cells");
    body_ += join(cells);
    ++rows_;
}

std::string CsvWriter::str() const { return body_; }

void CsvWriter::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body_;
}

std::vector<std::string> numbered_columns(const std::string& prefix, std::size_t n) {
    std::vector<std::string> cols;
    for (std::size_t i = 1; i <= n; ++i) cols.push_back(prefix + std::to_string(i));
    return cols;
}

}  // namespace ldp
