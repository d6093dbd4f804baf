#pragma once

// Renders matrix CSVs (grids, histograms, profiles) as binary PPM images.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace heatmap {

struct Matrix {
    std::vector<std::string> row_labels;
    std::vector<std::vector<double>> values;  // NaN for empty cells
};

// Skips '#' comment lines and the column header; first column holds labels.
inline Matrix read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Matrix m;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        m.row_labels.push_back(cell);
        while (std::getline(ss, cell, ','))
            row.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell));
        if (!line.empty() && line.back() == ',') row.push_back(std::numeric_limits<double>::quiet_NaN());
        m.values.push_back(std::move(row));
    }
    return m;
}

struct Rgb {
    std::uint8_t r, g, b;
};

// Diverging blue-white-red for signed data, white-to-red otherwise.
inline Rgb color(double v, double lo, double hi) {
    if (std::isnan(v)) return {160, 160, 160};
    if (lo < 0) {
        const double m = std::max(std::fabs(lo), std::fabs(hi));
        const double t = m > 0 ? std::clamp(v / m, -1.0, 1.0) : 0.0;
        const auto fade = [](double x) { return static_cast<std::uint8_t>(std::lround(255 * (1 - x))); };
        return t >= 0 ? Rgb{255, fade(t), fade(t)} : Rgb{fade(-t), fade(-t), 255};
    }
    const double t = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    const auto c = static_cast<std::uint8_t>(std::lround(255 * (1 - t)));
    return {255, c, c};
}

// Row 0 is drawn at the bottom so the row axis reads upwards.
inline void write_ppm(const Matrix& m, const std::filesystem::path& out, int cell_w = 12, int cell_h = 12) {
    if (m.values.empty()) throw std::runtime_error("empty matrix");
    std::size_t cols = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : m.values) {
        cols = std::max(cols, r.size());
        for (double v : r)
            if (!std::isnan(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (!std::isfinite(lo)) lo = hi = 0;
    const int w = static_cast<int>(cols) * cell_w, h = static_cast<int>(m.values.size()) * cell_h;
    std::ofstream f(out, std::ios::binary);
    f << "P6\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
        const auto& row = m.values[m.values.size() - 1 - static_cast<std::size_t>(y / cell_h)];
        for (int x = 0; x < w; ++x) {
            const auto c = static_cast<std::size_t>(x / cell_w);
            const Rgb p = color(c < row.size() ? row[c] : std::numeric_limits<double>::quiet_NaN(), lo, hi);
            f.put(static_cast<char>(p.r)).put(static_cast<char>(p.g)).put(static_cast<char>(p.b));
        }
    }
}

inline void render(const std::filesystem::path& csv) {
    auto m = read_csv(csv);
    // single-value profiles read better as wide strips
    const bool strip = !m.values.empty() && m.values.front().size() == 1;
    write_ppm(m, std::filesystem::path(csv).replace_extension(".ppm"), strip ? 40 : (m.values.front().size() > 50 ? 3 : 12),
              12);
}

} // namespace heatmap
