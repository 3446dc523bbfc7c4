#pragma once

// Line and cell splitting shared by the CSV readers.

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "odca/core.hpp"

namespace odca::detail {

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = end + 1;
    }
    return lines;
}

inline std::vector<std::string_view> split_cells(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(pos));
            break;
        }
        cells.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return cells;
}

inline double parse_number(std::string_view cell, std::size_t row, std::string_view column) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
        throw Error("row " + std::to_string(row) + ": malformed " + std::string(column) + " '" +
                    std::string(cell) + "'");
    return value;
}

inline std::optional<double> parse_optional(std::string_view cell, std::size_t row, std::string_view column) {
    if (cell.empty()) return std::nullopt;
    return parse_number(cell, row, column);
}

}  // namespace odca::detail
