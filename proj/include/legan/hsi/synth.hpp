#pragma once

// Synthetic scene generator: every pixel spectrum is a convex combination of
// n_endmembers smooth signatures. Each endmember owns a dominant Gaussian
// bump in its own slice of the 450-950 nm range (keeps the signature matrix
// well conditioned), plus a weaker secondary bump and a gentle linear slope.
// Abundance maps come from Gaussian-smoothed white noise pushed through a
// per-pixel softmax, so they are spatially correlated, non-negative and sum
// to one exactly.

#include <cmath>

#include "legan/core/rng.hpp"
#include "legan/hsi/cube.hpp"

namespace legan {

struct SynthSpec {
    idx height = 64;
    idx width = 64;
    idx bands = 16;
    idx n_endmembers = 4;
    double smoothness = 8.0; // abundance correlation length in pixels
    std::uint64_t seed = 0;

    void validate() const {
        if (height <= 0 || width <= 0 || bands <= 0) throw std::invalid_argument("synth: non-positive dimensions");
        if (n_endmembers < 2) throw std::invalid_argument("synth: n_endmembers must be at least 2");
        if (!(smoothness > 0.0)) throw std::invalid_argument("synth: smoothness must be positive");
    }
};

struct SynthScene {
    HSICube cube;
    // endmembers[e][b]: signature value of endmember e at band b (the exact
    // values the cube was mixed from; the unmixing tests recover against these)
    std::vector<std::vector<double>> endmembers;
    // abundances[e]: row-major height x width map, per-pixel sum == 1
    std::vector<std::vector<double>> abundances;
};

namespace detail {

inline void gaussian_blur_reflect(std::vector<double>& img, idx h, idx w, double sigma) {
    const idx r = static_cast<idx>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * r + 1));
    double ks = 0.0;
    for (idx i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + r)] = v;
        ks += v;
    }
    for (auto& v : k) v /= ks;
    auto reflect = [](idx i, idx n) {
        if (n == 1) return idx{0};
        const idx period = 2 * (n - 1);
        idx m = i % period;
        if (m < 0) m += period;
        return m < n ? m : period - m;
    };
    std::vector<double> tmp(img.size());
    for (idx y = 0; y < h; ++y)
        for (idx x = 0; x < w; ++x) {
            double s = 0.0;
            for (idx i = -r; i <= r; ++i) s += k[static_cast<size_t>(i + r)] * img[static_cast<size_t>(y * w + reflect(x + i, w))];
            tmp[static_cast<size_t>(y * w + x)] = s;
        }
    for (idx y = 0; y < h; ++y)
        for (idx x = 0; x < w; ++x) {
            double s = 0.0;
            for (idx i = -r; i <= r; ++i) s += k[static_cast<size_t>(i + r)] * tmp[static_cast<size_t>(reflect(y + i, h) * w + x)];
            img[static_cast<size_t>(y * w + x)] = s;
        }
}

} // namespace detail

inline SynthScene synth_scene(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const idx H = spec.height, W = spec.width, B = spec.bands, E = spec.n_endmembers;

    SynthScene scene;
    scene.cube = HSICube(H, W, B);
    scene.cube.wavelengths.resize(static_cast<size_t>(B));
    const double lo_nm = 450.0, hi_nm = 950.0;
    for (idx b = 0; b < B; ++b)
        scene.cube.wavelengths[static_cast<size_t>(b)] =
            B > 1 ? lo_nm + (hi_nm - lo_nm) * static_cast<double>(b) / static_cast<double>(B - 1) : lo_nm;

    // spectral signatures
    scene.endmembers.assign(static_cast<size_t>(E), std::vector<double>(static_cast<size_t>(B)));
    const double sector = (hi_nm - lo_nm) / static_cast<double>(E);
    for (idx e = 0; e < E; ++e) {
        const double c1 = lo_nm + sector * (static_cast<double>(e) + rng.uniform(0.25, 0.75));
        const double w1 = rng.uniform(35.0, 90.0);
        const double c2 = rng.uniform(lo_nm, hi_nm);
        const double w2 = rng.uniform(80.0, 200.0);
        const double a2 = rng.uniform(0.15, 0.45);
        const double slope = rng.uniform(-0.25, 0.25);
        auto& em = scene.endmembers[static_cast<size_t>(e)];
        double mn = 1e300, mx = -1e300;
        for (idx b = 0; b < B; ++b) {
            const double nm = scene.cube.wavelengths[static_cast<size_t>(b)];
            const double v = std::exp(-0.5 * (nm - c1) * (nm - c1) / (w1 * w1)) +
                             a2 * std::exp(-0.5 * (nm - c2) * (nm - c2) / (w2 * w2)) +
                             slope * (nm - lo_nm) / (hi_nm - lo_nm);
            em[static_cast<size_t>(b)] = v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        // map onto a radiance range comfortably inside [0, 255]
        const double lo_r = rng.uniform(8.0, 55.0);
        const double hi_r = rng.uniform(160.0, 248.0);
        const double span = mx > mn ? mx - mn : 1.0;
        for (idx b = 0; b < B; ++b)
            em[static_cast<size_t>(b)] = lo_r + (hi_r - lo_r) * (em[static_cast<size_t>(b)] - mn) / span;
    }

    // abundance fields: smoothed noise -> standardize -> softmax
    std::vector<std::vector<double>> fields(static_cast<size_t>(E), std::vector<double>(static_cast<size_t>(H * W)));
    for (auto& f : fields) {
        for (auto& v : f) v = rng.normal();
        detail::gaussian_blur_reflect(f, H, W, spec.smoothness);
        double mean = 0.0;
        for (double v : f) mean += v;
        mean /= static_cast<double>(f.size());
        double var = 0.0;
        for (double v : f) var += (v - mean) * (v - mean);
        var /= static_cast<double>(f.size());
        const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
        for (auto& v : f) v = (v - mean) * inv;
    }
    const double temp = 0.55; // softmax sharpness: lower -> patchier scenes
    scene.abundances.assign(static_cast<size_t>(E), std::vector<double>(static_cast<size_t>(H * W)));
    for (idx p = 0; p < H * W; ++p) {
        double mx = -1e300;
        for (idx e = 0; e < E; ++e) mx = std::max(mx, fields[static_cast<size_t>(e)][static_cast<size_t>(p)]);
        double z = 0.0;
        for (idx e = 0; e < E; ++e) {
            const double v = std::exp((fields[static_cast<size_t>(e)][static_cast<size_t>(p)] - mx) / temp);
            scene.abundances[static_cast<size_t>(e)][static_cast<size_t>(p)] = v;
            z += v;
        }
        for (idx e = 0; e < E; ++e) scene.abundances[static_cast<size_t>(e)][static_cast<size_t>(p)] /= z;
    }

    // mix
    for (idx b = 0; b < B; ++b) {
        float* bp = scene.cube.band_ptr(b);
        for (idx p = 0; p < H * W; ++p) {
            double v = 0.0;
            for (idx e = 0; e < E; ++e)
                v += scene.abundances[static_cast<size_t>(e)][static_cast<size_t>(p)] * scene.endmembers[static_cast<size_t>(e)][static_cast<size_t>(b)];
            bp[p] = static_cast<float>(v);
        }
    }
    return scene;
}

inline HSICube synth_cube(const SynthSpec& spec) { return synth_scene(spec).cube; }

} // namespace legan
