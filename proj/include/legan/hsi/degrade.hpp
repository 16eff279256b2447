#pragma once

// Degradation pipeline: bicubic resampling (Catmull-Rom kernel, a = -0.5,
// reflected borders) applied per band, and per-band Gaussian noise pinned to
// a target SNR. The resampler maps output pixel centers to input coordinates
// with the half-pixel convention src = (dst + 0.5) * in/out - 0.5 and is
// separable (rows then columns).

#include <array>
#include <cmath>

#include "legan/core/rng.hpp"
#include "legan/hsi/cube.hpp"

namespace legan {

namespace bicubic {

// Catmull-Rom weights for the four taps at offsets {-1, 0, +1, +2} around
// the integer part, given fractional position f in [0, 1)
inline std::array<double, 4> weights(double f) {
    const double f2 = f * f, f3 = f2 * f;
    return {
        -0.5 * f3 + f2 - 0.5 * f,
        1.5 * f3 - 2.5 * f2 + 1.0,
        -1.5 * f3 + 2.0 * f2 + 0.5 * f,
        0.5 * f3 - 0.5 * f2,
    };
}

// mirror index into [0, n) without repeating the edge sample
inline idx reflect(idx i, idx n) {
    if (n == 1) return 0;
    const idx period = 2 * (n - 1);
    idx m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

struct Taps {
    idx base;                  // index of the f-floor sample
    std::array<double, 4> w;
};

inline std::vector<Taps> plan(idx in, idx out) {
    std::vector<Taps> taps(static_cast<size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (idx o = 0; o < out; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        const double fl = std::floor(src);
        taps[static_cast<size_t>(o)].base = static_cast<idx>(fl);
        taps[static_cast<size_t>(o)].w = weights(src - fl);
    }
    return taps;
}

// one band, double buffers, arbitrary target size
inline void resize_plane(const double* src, idx h, idx w, double* dst, idx oh, idx ow) {
    const auto tx = plan(w, ow);
    const auto ty = plan(h, oh);
    std::vector<double> tmp(static_cast<size_t>(h * ow)); // rows resized first
    for (idx y = 0; y < h; ++y)
        for (idx o = 0; o < ow; ++o) {
            const Taps& t = tx[static_cast<size_t>(o)];
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += t.w[static_cast<size_t>(k)] * src[y * w + reflect(t.base - 1 + k, w)];
            tmp[static_cast<size_t>(y * ow + o)] = s;
        }
    for (idx o = 0; o < oh; ++o) {
        const Taps& t = ty[static_cast<size_t>(o)];
        for (idx x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += t.w[static_cast<size_t>(k)] * tmp[static_cast<size_t>(reflect(t.base - 1 + k, h) * ow + x)];
            dst[o * ow + x] = s;
        }
    }
}

} // namespace bicubic

inline HSICube bicubic_resize(const HSICube& cube, idx out_h, idx out_w) {
    cube.validate();
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("bicubic_resize: non-positive output size");
    HSICube out(out_h, out_w, cube.bands);
    out.wavelengths = cube.wavelengths;
    std::vector<double> src(static_cast<size_t>(cube.height * cube.width));
    std::vector<double> dst(static_cast<size_t>(out_h * out_w));
    for (idx b = 0; b < cube.bands; ++b) {
        const float* sp = cube.band_ptr(b);
        for (size_t i = 0; i < src.size(); ++i) src[i] = static_cast<double>(sp[i]);
        bicubic::resize_plane(src.data(), cube.height, cube.width, dst.data(), out_h, out_w);
        float* dp = out.band_ptr(b);
        for (size_t i = 0; i < dst.size(); ++i) dp[i] = static_cast<float>(dst[i]);
    }
    return out;
}

inline void check_scale(idx scale) {
    if (scale != 2 && scale != 4 && scale != 8)
        throw std::invalid_argument("scale must be one of 2, 4, 8; got " + std::to_string(scale));
}

inline HSICube bicubic_downsample(const HSICube& cube, idx scale) {
    check_scale(scale);
    if (cube.height % scale != 0 || cube.width % scale != 0)
        throw std::invalid_argument("bicubic_downsample: dimensions " + std::to_string(cube.height) + "x" +
                                    std::to_string(cube.width) + " not divisible by scale " + std::to_string(scale));
    return bicubic_resize(cube, cube.height / scale, cube.width / scale);
}

inline HSICube bicubic_upsample(const HSICube& cube, idx scale) {
    check_scale(scale);
    return bicubic_resize(cube, cube.height * scale, cube.width * scale);
}

// Zero-mean Gaussian noise per band such that 10*log10(P_signal/P_noise)
// equals snr_db band-wise. Infinite SNR is the identity. Deterministic for a
// fixed seed: one generator, bands processed in order.
inline HSICube add_noise_snr(const HSICube& cube, double snr_db, std::uint64_t seed) {
    cube.validate();
    if (std::isinf(snr_db) && snr_db > 0) return cube;
    if (!(snr_db > 0.0 && snr_db < 200.0))
        throw std::invalid_argument("add_noise_snr: snr_db must be infinite or in (0, 200)");
    HSICube out = cube;
    Rng rng(seed);
    const idx plane = cube.height * cube.width;
    for (idx b = 0; b < cube.bands; ++b) {
        const float* sp = cube.band_ptr(b);
        double power = 0.0;
        for (idx i = 0; i < plane; ++i) power += static_cast<double>(sp[i]) * static_cast<double>(sp[i]);
        power /= static_cast<double>(plane);
        const double sigma = std::sqrt(power * std::pow(10.0, -snr_db / 10.0));
        float* dp = out.band_ptr(b);
        for (idx i = 0; i < plane; ++i) dp[i] = static_cast<float>(static_cast<double>(sp[i]) + rng.normal(0.0, sigma));
    }
    return out;
}

} // namespace legan
