#pragma once

// Full-reference reconstruction metrics on radiance cubes in [0, 255]:
// peak signal-to-noise ratio, structural similarity, spectral angle, and
// spectral relative error. All accumulation is done in double.

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "legan/hsi/cube.hpp"

namespace legan {

struct MetricReport {
    double psnr = 0.0;
    bool psnr_infinite = false;
    double ssim = 0.0;
    double pi = std::numeric_limits<double>::quiet_NaN(); // filled by the perceptual scorer
    bool pi_placeholder_sharpness = false;                // true when the constant sharpness scorer was used
    double sam = 0.0;
    double sam_skipped_fraction = 0.0; // pixels with a zero-norm spectrum on either side
    double sre = 0.0;
    std::vector<double> band_psnr; // optional per-band breakdowns
    std::vector<double> band_sre;
};

namespace detail_metrics {

inline void require_same_shape(const HSICube& a, const HSICube& b, const char* who) {
    if (a.height != b.height || a.width != b.width || a.bands != b.bands)
        throw std::invalid_argument(std::string(who) + ": cube shapes differ");
}

inline double band_mse(const HSICube& hr, const HSICube& sr, idx b) {
    const float* h = hr.band_ptr(b);
    const float* s = sr.band_ptr(b);
    const idx n = hr.height * hr.width;
    double acc = 0.0;
    for (idx i = 0; i < n; ++i) {
        const double d = static_cast<double>(h[i]) - static_cast<double>(s[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

inline double mse_to_psnr(double mse) {
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// normalized 1-D Gaussian taps for the structural-similarity window
inline std::vector<double> gaussian_taps(idx n, double sigma) {
    std::vector<double> w(static_cast<size_t>(n));
    const double c = static_cast<double>(n - 1) / 2.0;
    double s = 0.0;
    for (idx i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - c;
        w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        s += w[static_cast<size_t>(i)];
    }
    for (auto& v : w) v /= s;
    return w;
}

// separable valid-region filter: [h, w] -> [h - n + 1, w - n + 1]
inline std::vector<double> valid_filter(const std::vector<double>& img, idx h, idx w, const std::vector<double>& taps) {
    const idx n = static_cast<idx>(taps.size());
    const idx ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(static_cast<size_t>(h * ow));
    for (idx y = 0; y < h; ++y)
        for (idx x = 0; x < ow; ++x) {
            double s = 0.0;
            for (idx k = 0; k < n; ++k) s += taps[static_cast<size_t>(k)] * img[static_cast<size_t>(y * w + x + k)];
            rows[static_cast<size_t>(y * ow + x)] = s;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (idx y = 0; y < oh; ++y)
        for (idx x = 0; x < ow; ++x) {
            double s = 0.0;
            for (idx k = 0; k < n; ++k) s += taps[static_cast<size_t>(k)] * rows[static_cast<size_t>((y + k) * ow + x)];
            out[static_cast<size_t>(y * ow + x)] = s;
        }
    return out;
}

} // namespace detail_metrics

// global 10*log10(255^2 / MSE); infinite (and flagged) when the cubes agree exactly
inline double psnr(const HSICube& hr, const HSICube& sr, bool* infinite = nullptr) {
    detail_metrics::require_same_shape(hr, sr, "psnr");
    double mse = 0.0;
    for (idx b = 0; b < hr.bands; ++b) mse += detail_metrics::band_mse(hr, sr, b);
    mse /= static_cast<double>(hr.bands);
    const double v = detail_metrics::mse_to_psnr(mse);
    if (infinite) *infinite = std::isinf(v);
    return v;
}

// single-scale structural similarity per band (Gaussian window 11, sigma 1.5,
// C1 = (0.01*255)^2, C2 = (0.03*255)^2), composed as luminance * contrast *
// structure and averaged over the valid region, then over bands
inline double ssim(const HSICube& hr, const HSICube& sr) {
    detail_metrics::require_same_shape(hr, sr, "ssim");
    const idx win = 11;
    if (hr.height < win || hr.width < win)
        throw std::invalid_argument("ssim: patch smaller than the 11x11 window");
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const double c3 = c2 / 2.0;
    const auto taps = detail_metrics::gaussian_taps(win, 1.5);
    const idx h = hr.height, w = hr.width, plane = h * w;

    double total = 0.0;
    std::vector<double> x(static_cast<size_t>(plane)), y(static_cast<size_t>(plane));
    std::vector<double> xx(static_cast<size_t>(plane)), yy(static_cast<size_t>(plane)), xy(static_cast<size_t>(plane));
    for (idx b = 0; b < hr.bands; ++b) {
        const float* hp = hr.band_ptr(b);
        const float* sp = sr.band_ptr(b);
        for (idx i = 0; i < plane; ++i) {
            x[static_cast<size_t>(i)] = static_cast<double>(hp[i]);
            y[static_cast<size_t>(i)] = static_cast<double>(sp[i]);
            xx[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
            yy[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
            xy[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
        }
        const auto mx = detail_metrics::valid_filter(x, h, w, taps);
        const auto my = detail_metrics::valid_filter(y, h, w, taps);
        const auto mxx = detail_metrics::valid_filter(xx, h, w, taps);
        const auto myy = detail_metrics::valid_filter(yy, h, w, taps);
        const auto mxy = detail_metrics::valid_filter(xy, h, w, taps);
        double band = 0.0;
        for (size_t i = 0; i < mx.size(); ++i) {
            const double vx = std::max(mxx[i] - mx[i] * mx[i], 0.0);
            const double vy = std::max(myy[i] - my[i] * my[i], 0.0);
            const double cov = mxy[i] - mx[i] * my[i];
            const double cross = std::sqrt(vx * vy);
            const double l = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
            const double c = (2.0 * cross + c2) / (vx + vy + c2);
            const double s = (cov + c3) / (cross + c3);
            band += l * c * s;
        }
        total += band / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(hr.bands);
}

// mean spectral angle in degrees; pixels with a zero-norm spectrum on either
// side are skipped and reported through the optional counter
inline double sam(const HSICube& hr, const HSICube& sr, idx* skipped = nullptr) {
    detail_metrics::require_same_shape(hr, sr, "sam");
    const idx plane = hr.height * hr.width;
    double acc = 0.0;
    idx counted = 0, dropped = 0;
    for (idx p = 0; p < plane; ++p) {
        double dot = 0.0, nh = 0.0, ns = 0.0;
        for (idx b = 0; b < hr.bands; ++b) {
            const double hv = hr.data[static_cast<size_t>(b * plane + p)];
            const double sv = sr.data[static_cast<size_t>(b * plane + p)];
            dot += hv * sv;
            nh += hv * hv;
            ns += sv * sv;
        }
        if (nh == 0.0 || ns == 0.0) {
            ++dropped;
            continue;
        }
        const double cosv = std::min(1.0, std::max(-1.0, dot / std::sqrt(nh * ns)));
        acc += std::acos(cosv);
        ++counted;
    }
    if (skipped) *skipped = dropped;
    if (counted == 0) throw std::runtime_error("sam: every pixel has a zero-norm spectrum");
    return (acc / static_cast<double>(counted)) * (180.0 / 3.14159265358979323846);
}

// square root of the band-averaged per-band mean squared error
inline double sre(const HSICube& hr, const HSICube& sr) {
    detail_metrics::require_same_shape(hr, sr, "sre");
    double acc = 0.0;
    for (idx b = 0; b < hr.bands; ++b) acc += detail_metrics::band_mse(hr, sr, b);
    return std::sqrt(acc / static_cast<double>(hr.bands));
}

// all full-reference metrics in one pass; the perceptual index is left NaN
// for the caller that owns a fitted naturalness model
inline MetricReport evaluate_fidelity(const HSICube& hr, const HSICube& sr, bool per_band = true) {
    MetricReport r;
    r.psnr = psnr(hr, sr, &r.psnr_infinite);
    r.ssim = ssim(hr, sr);
    idx dropped = 0;
    r.sam = sam(hr, sr, &dropped);
    r.sam_skipped_fraction = static_cast<double>(dropped) / static_cast<double>(hr.height * hr.width);
    r.sre = sre(hr, sr);
    if (per_band)
        for (idx b = 0; b < hr.bands; ++b) {
            const double mse = detail_metrics::band_mse(hr, sr, b);
            r.band_psnr.push_back(detail_metrics::mse_to_psnr(mse));
            r.band_sre.push_back(std::sqrt(mse));
        }
    return r;
}

// line-oriented "key = value" report with optional per-band sections
inline std::string format_report(const MetricReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    if (r.psnr_infinite)
        os << "psnr = inf (exact match)\n";
    else
        os << "psnr = " << r.psnr << "\n";
    os << "ssim = " << r.ssim << "\n";
    if (std::isfinite(r.pi)) {
        os << "pi = " << r.pi;
        if (r.pi_placeholder_sharpness) os << " (constant sharpness score; relative comparisons only)";
        os << "\n";
    }
    os << "sam = " << r.sam << "\n";
    if (r.sam_skipped_fraction > 0.01)
        os << "sam_warning = " << r.sam_skipped_fraction * 100.0 << "% of pixels skipped (zero-norm spectra)\n";
    os << "sre = " << r.sre << "\n";
    if (!r.band_psnr.empty()) {
        os << "[per_band_psnr]\n";
        for (size_t b = 0; b < r.band_psnr.size(); ++b) os << "band." << b << " = " << r.band_psnr[b] << "\n";
    }
    if (!r.band_sre.empty()) {
        os << "[per_band_sre]\n";
        for (size_t b = 0; b < r.band_sre.size(); ++b) os << "band." << b << " = " << r.band_sre[b] << "\n";
    }
    return os.str();
}

} // namespace legan
