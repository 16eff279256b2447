#pragma once

// Hyperspectral cube in memory: band-sequential float32 payload plus the
// per-band wavelength axis. Values are radiance rescaled to [0, 255] by the
// producers (synthesis / ingest); the type itself only demands finiteness.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "legan/core/tensor.hpp"

namespace legan {

struct HSICube {
    idx height = 0;
    idx width = 0;
    idx bands = 0;
    std::vector<float> data;          // layout: data[(b*height + y)*width + x]
    std::vector<double> wavelengths;  // nm, strictly increasing, one per band

    HSICube() = default;
    HSICube(idx h, idx w, idx b) : height(h), width(w), bands(b), data(static_cast<size_t>(h * w * b), 0.0f) {
        wavelengths.resize(static_cast<size_t>(b));
        for (idx i = 0; i < b; ++i) wavelengths[static_cast<size_t>(i)] = static_cast<double>(i + 1);
    }

    idx numel() const { return static_cast<idx>(data.size()); }

    float& at(idx b, idx y, idx x) { return data[static_cast<size_t>((b * height + y) * width + x)]; }
    const float& at(idx b, idx y, idx x) const { return data[static_cast<size_t>((b * height + y) * width + x)]; }

    float* band_ptr(idx b) { return data.data() + static_cast<size_t>(b * height * width); }
    const float* band_ptr(idx b) const { return data.data() + static_cast<size_t>(b * height * width); }

    void validate() const {
        if (height <= 0 || width <= 0 || bands <= 0)
            throw std::invalid_argument("cube: non-positive dimensions");
        if (static_cast<idx>(data.size()) != height * width * bands)
            throw std::invalid_argument("cube: data length " + std::to_string(data.size()) + " does not equal h*w*bands");
        if (static_cast<idx>(wavelengths.size()) != bands)
            throw std::invalid_argument("cube: wavelength count does not equal band count");
        for (size_t i = 1; i < wavelengths.size(); ++i)
            if (!(wavelengths[i] > wavelengths[i - 1]))
                throw std::invalid_argument("cube: wavelengths not strictly increasing");
        for (float v : data)
            if (!std::isfinite(v)) throw std::invalid_argument("cube: non-finite value in payload");
    }

    bool identical(const HSICube& o) const {
        if (height != o.height || width != o.width || bands != o.bands) return false;
        if (wavelengths != o.wavelengths) return false;
        for (size_t i = 0; i < data.size(); ++i)
            if (data[i] != o.data[i]) return false;
        return true;
    }
};

// axis-aligned crop (all bands)
inline HSICube crop_cube(const HSICube& c, idx y0, idx x0, idx h, idx w) {
    if (y0 < 0 || x0 < 0 || y0 + h > c.height || x0 + w > c.width)
        throw std::invalid_argument("crop_cube: window out of range");
    HSICube out(h, w, c.bands);
    out.wavelengths = c.wavelengths;
    for (idx b = 0; b < c.bands; ++b)
        for (idx y = 0; y < h; ++y)
            for (idx x = 0; x < w; ++x) out.at(b, y, x) = c.at(b, y0 + y, x0 + x);
    return out;
}

// single-band view copied out as a cube (used by the per-band property tests)
inline HSICube select_band(const HSICube& c, idx b) {
    HSICube out(c.height, c.width, 1);
    out.wavelengths = {c.wavelengths[static_cast<size_t>(b)]};
    for (idx y = 0; y < c.height; ++y)
        for (idx x = 0; x < c.width; ++x) out.at(0, y, x) = c.at(b, y, x);
    return out;
}

} // namespace legan
