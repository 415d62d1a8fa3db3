#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ldp {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Minimal CSV writer; values are written with format_double so output is byte-stable.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    void add_row(const std::vector<double>& values);
    void add_row(const std::vector<std::string>& cells);

    std::string str() const;
    void save(const std::filesystem::path& path) const;

    std::size_t rows() const noexcept { return rows_; }

private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string body_;
};

/// Column names prefix1..prefixN.
std::vector<std::string> numbered_columns(const std::string& prefix, std::size_t n);

}  // namespace ldp
