#pragma once

// Minimal raster plotting: polyline and bar charts drawn into an RGB canvas
// and saved as uncompressed 24-bit BMP files. The numeric content always
// ships alongside as CSV; these images are quick visual summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "legan/core/tensor.hpp"

namespace legan::plot {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct Canvas {
    idx width = 0, height = 0;
    std::vector<Rgb> px;

    Canvas(idx w, idx h, Rgb bg = Rgb{255, 255, 255}) : width(w), height(h) {
        if (w < 8 || h < 8) throw std::invalid_argument("canvas: too small");
        px.assign(static_cast<size_t>(w * h), bg);
    }

    void set(idx x, idx y, Rgb c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        px[static_cast<size_t>(y * width + x)] = c;
    }

    void line(idx x0, idx y0, idx x1, idx y1, Rgb c) {
        const idx dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const idx sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        idx err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const idx e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void fill_rect(idx x0, idx y0, idx x1, idx y1, Rgb c) {
        for (idx y = std::max<idx>(0, y0); y <= std::min(height - 1, y1); ++y)
            for (idx x = std::max<idx>(0, x0); x <= std::min(width - 1, x1); ++x) set(x, y, c);
    }
};

inline void save_bmp(const Canvas& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("plot: cannot write " + path);
    const idx row_bytes = (3 * c.width + 3) / 4 * 4;
    const std::uint32_t payload = static_cast<std::uint32_t>(row_bytes * c.height);
    const std::uint32_t file_size = 54 + payload;
    auto put16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write("BM", 2);
    put32(file_size);
    put32(0);
    put32(54);
    put32(40); // BITMAPINFOHEADER
    put32(static_cast<std::uint32_t>(c.width));
    put32(static_cast<std::uint32_t>(c.height));
    put16(1);
    put16(24);
    put32(0);
    put32(payload);
    put32(2835);
    put32(2835);
    put32(0);
    put32(0);
    std::vector<char> row(static_cast<size_t>(row_bytes), 0);
    for (idx y = c.height - 1; y >= 0; --y) { // bottom-up rows
        for (idx x = 0; x < c.width; ++x) {
            const Rgb& p = c.px[static_cast<size_t>(y * c.width + x)];
            row[static_cast<size_t>(3 * x)] = static_cast<char>(p.b);
            row[static_cast<size_t>(3 * x + 1)] = static_cast<char>(p.g);
            row[static_cast<size_t>(3 * x + 2)] = static_cast<char>(p.r);
        }
        out.write(row.data(), row_bytes);
    }
    if (!out) throw std::runtime_error("plot: write failed for " + path);
}

struct Series {
    std::vector<double> x, y;
    Rgb color{0, 0, 0};
};

inline const std::vector<Rgb>& palette() {
    static const std::vector<Rgb> p{{200, 40, 40}, {40, 90, 200}, {30, 150, 60}, {190, 130, 20}, {130, 50, 170}};
    return p;
}

// autoscaled polyline chart with a framed plot area; non-finite points are
// skipped (they break the polyline)
inline Canvas line_chart(const std::vector<Series>& series, idx width = 640, idx height = 400) {
    if (series.empty()) throw std::invalid_argument("plot: no series");
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: series length mismatch");
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    }
    if (!std::isfinite(xlo)) throw std::invalid_argument("plot: no finite points");
    if (xhi <= xlo) xhi = xlo + 1.0;
    if (yhi <= ylo) yhi = ylo + 1.0;

    Canvas c(width, height);
    const idx m = 24; // frame margin
    c.line(m, m, width - m, m, Rgb{0, 0, 0});
    c.line(m, height - m, width - m, height - m, Rgb{0, 0, 0});
    c.line(m, m, m, height - m, Rgb{0, 0, 0});
    c.line(width - m, m, width - m, height - m, Rgb{0, 0, 0});

    auto px = [&](double x) {
        return m + static_cast<idx>(std::lround((x - xlo) / (xhi - xlo) * static_cast<double>(width - 2 * m)));
    };
    auto py = [&](double y) {
        return height - m - static_cast<idx>(std::lround((y - ylo) / (yhi - ylo) * static_cast<double>(height - 2 * m)));
    };
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const Rgb col = s.color.r || s.color.g || s.color.b ? s.color : palette()[si % palette().size()];
        bool have_prev = false;
        idx px0 = 0, py0 = 0;
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                have_prev = false;
                continue;
            }
            const idx x1 = px(s.x[i]), y1 = py(s.y[i]);
            if (have_prev) c.line(px0, py0, x1, y1, col);
            px0 = x1;
            py0 = y1;
            have_prev = true;
        }
    }
    return c;
}

inline Canvas bar_chart(const std::vector<double>& values, idx width = 640, idx height = 400) {
    if (values.empty()) throw std::invalid_argument("plot: no bars");
    double hi = 0.0;
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("plot: bars must be finite and non-negative");
        hi = std::max(hi, v);
    }
    if (hi <= 0.0) hi = 1.0;
    Canvas c(width, height);
    const idx m = 24;
    const idx span = width - 2 * m;
    const idx n = static_cast<idx>(values.size());
    const idx slot = std::max<idx>(1, span / n);
    c.line(m, height - m, width - m, height - m, Rgb{0, 0, 0});
    for (idx i = 0; i < n; ++i) {
        const idx h = static_cast<idx>(std::lround(values[static_cast<size_t>(i)] / hi * static_cast<double>(height - 2 * m)));
        const idx x0 = m + i * slot + 1;
        const idx x1 = std::min(width - m - 1, x0 + slot - 2);
        c.fill_rect(x0, height - m - h, x1, height - m - 1, palette()[1]);
    }
    return c;
}

} // namespace legan::plot
