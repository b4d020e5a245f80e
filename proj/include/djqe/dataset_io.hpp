#pragma once

// CSV reader/writer for the dataset schema `x_1,...,x_p,a,y`.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "djqe/core.hpp"

namespace djqe {

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Parses CSV text. Row numbers in error messages count the header as row 1.
inline Dataset parse_dataset_csv(std::istream& in,
                                 ActionNormalization norm = ActionNormalization::automatic) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty CSV: missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[header.size() - 2] != "a" || header.back() != "y") {
        throw ValidationError("CSV header must be x_1,...,x_p,a,y");
    }
    const std::size_t p = header.size() - 2;

    std::vector<double> feats;
    std::vector<double> actions;
    std::vector<double> rewards;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != p + 2) {
            throw ValidationError("malformed CSV row " + std::to_string(row) + ": expected " +
                                  std::to_string(p + 2) + " fields, found " +
                                  std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            double v = 0.0;
            if (!detail::parse_double(fields[j], v)) {
                throw ValidationError("malformed CSV row " + std::to_string(row) + ": field " +
                                      std::to_string(j + 1) + " is not a number");
            }
            if (j < p) feats.push_back(v);
            else if (j == p) actions.push_back(v);
            else rewards.push_back(v);
        }
    }
    const std::size_t n = actions.size();
    return Dataset(Matrix(n, p, std::move(feats)), std::move(actions), std::move(rewards), norm);
}

inline Dataset read_dataset_csv(const std::string& path,
                                ActionNormalization norm = ActionNormalization::automatic) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    try {
        return parse_dataset_csv(in, norm);
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
    for (std::size_t j = 0; j < data.dim(); ++j) out << "x_" << (j + 1) << ',';
    out << "a,y\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.x(i)) out << detail::format_double(v) << ',';
        out << detail::format_double(data.actions()[i]) << ','
            << detail::format_double(data.rewards()[i]) << '\n';
    }
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_dataset_csv(out, data);
    if (!out) throw IoError("write failed for '" + path + "'");
}

/// Single-column action file (header `action`), used for tabulated policies.
inline std::vector<double> read_action_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open policy file '" + path + "'");
    std::string line;
    std::vector<double> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        auto fields = detail::split_csv_line(line);
        if (fields.size() == 1 && fields[0].empty()) continue;
        double v = 0.0;
        if (!detail::parse_double(fields.back(), v)) {
            if (row == 1) continue;  // header
            throw ValidationError(path + ": malformed policy row " + std::to_string(row));
        }
        out.push_back(v);
    }
    return out;
}

inline void write_action_column(const std::string& path, std::span<const double> actions) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "action\n";
    for (double a : actions) out << detail::format_double(a) << '\n';
}

}  // namespace djqe
