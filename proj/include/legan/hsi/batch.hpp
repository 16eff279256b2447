// Adapters between cubes and [N, C, H, W] batch tensors, plus batched bicubic
// resizing for network skip paths and baseline comparisons.
#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "legan/core/tensor.hpp"
#include "legan/hsi/cube.hpp"
#include "legan/hsi/degrade.hpp"

namespace legan {

inline Tensor<float> to_batch(std::span<const HSICube> cubes) {
    if (cubes.empty()) throw std::invalid_argument("to_batch: empty cube list");
    const HSICube& first = cubes[0];
    for (const auto& c : cubes)
        if (c.height != first.height || c.width != first.width || c.bands != first.bands)
            throw std::invalid_argument("to_batch: cubes must share dimensions");
    Tensor<float> t({static_cast<idx>(cubes.size()), first.bands, first.height, first.width});
    float* dst = t.ptr();
    for (const auto& c : cubes) {
        std::copy(c.data.begin(), c.data.end(), dst);
        dst += c.numel();
    }
    return t;
}

inline Tensor<float> to_batch(const HSICube& cube) { return to_batch(std::span<const HSICube>(&cube, 1)); }

inline std::vector<HSICube> from_batch(const Tensor<float>& t, const std::vector<double>& wavelengths = {}) {
    if (t.ndim() != 4) throw std::invalid_argument("from_batch: expected [N, C, H, W] tensor");
    std::vector<HSICube> cubes;
    const idx n = t.dim(0), b = t.dim(1), h = t.dim(2), w = t.dim(3);
    for (idx i = 0; i < n; ++i) {
        HSICube c(h, w, b);
        const float* src = t.ptr() + i * b * h * w;
        std::copy(src, src + b * h * w, c.data.begin());
        if (!wavelengths.empty()) {
            if (static_cast<idx>(wavelengths.size()) != b)
                throw std::invalid_argument("from_batch: wavelength count mismatch");
            c.wavelengths = wavelengths;
        }
        cubes.push_back(std::move(c));
    }
    return cubes;
}

// per-plane bicubic resize of a batch tensor, arithmetic in double
inline Tensor<float> bicubic_resize_batch(const Tensor<float>& x, idx out_h, idx out_w) {
    if (x.ndim() != 4) throw std::invalid_argument("bicubic_resize_batch: expected [N, C, H, W] tensor");
    const idx n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<float> out({n, c, out_h, out_w});
    std::vector<double> src(static_cast<size_t>(h * w)), dst(static_cast<size_t>(out_h * out_w));
    for (idx p = 0; p < n * c; ++p) {
        const float* sp = x.ptr() + p * h * w;
        for (idx i = 0; i < h * w; ++i) src[static_cast<size_t>(i)] = sp[i];
        bicubic::resize_plane(src.data(), h, w, dst.data(), out_h, out_w);
        float* op = out.ptr() + p * out_h * out_w;
        for (idx i = 0; i < out_h * out_w; ++i) op[i] = static_cast<float>(dst[static_cast<size_t>(i)]);
    }
    return out;
}

} // namespace legan
