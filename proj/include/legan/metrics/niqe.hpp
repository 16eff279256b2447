#pragma once

// No-reference naturalness scoring: a NIQE model fitted in-repo on pristine
// radiance patches (multivariate Gaussian over standard spatial-domain MSCN
// features, evaluated per band and averaged), plus the perceptual index that
// combines it with a pluggable sharpness scorer.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "legan/hsi/cube.hpp"

namespace legan {

struct NiqeModel {
    bool fitted = false;
    idx block = 16;                // feature block edge at full scale (halved at scale 2)
    std::vector<double> mean;      // 36 features
    std::vector<double> cov;       // 36 x 36, row-major, unbiased
};

namespace detail_niqe {

constexpr idx kFeatures = 36; // 18 per scale (GGD 2 + four AGGD x 4), two scales

// ratio Gamma(1/a)*Gamma(3/a)/Gamma(2/a)^2 tabulated over the fit grid
inline const std::vector<double>& gamma_ratio_table() {
    static const std::vector<double> table = [] {
        std::vector<double> t;
        for (double a = 0.2; a <= 10.0005; a += 0.001)
            t.push_back(std::exp(std::lgamma(1.0 / a) + std::lgamma(3.0 / a) - 2.0 * std::lgamma(2.0 / a)));
        return t;
    }();
    return table;
}

inline double grid_alpha(size_t pos) { return 0.2 + 0.001 * static_cast<double>(pos); }

// symmetric generalized Gaussian: shape from the moment ratio, plus variance
inline void fit_ggd(const std::vector<double>& v, double* alpha, double* sigma_sq) {
    double e1 = 0.0, e2 = 0.0;
    for (double x : v) {
        e1 += std::abs(x);
        e2 += x * x;
    }
    e1 /= static_cast<double>(v.size());
    e2 /= static_cast<double>(v.size());
    const double rho = e2 / std::max(e1 * e1, 1e-24);
    const auto& table = gamma_ratio_table();
    size_t best = 0;
    double bd = std::abs(table[0] - rho);
    for (size_t i = 1; i < table.size(); ++i) {
        const double d = std::abs(table[i] - rho);
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    *alpha = grid_alpha(best);
    *sigma_sq = e2;
}

// asymmetric generalized Gaussian on a neighbour-product map; emits the
// standard four features (shape, mean offset, left and right variances)
inline void fit_aggd(const std::vector<double>& v, double out[4]) {
    double sl = 0.0, sr = 0.0, e1 = 0.0, e2 = 0.0;
    idx nl = 0, nr = 0;
    for (double x : v) {
        if (x < 0.0) {
            sl += x * x;
            ++nl;
        } else if (x > 0.0) {
            sr += x * x;
            ++nr;
        }
        e1 += std::abs(x);
        e2 += x * x;
    }
    const double n = static_cast<double>(v.size());
    e1 /= n;
    e2 /= n;
    const double lstd = nl ? std::sqrt(sl / static_cast<double>(nl)) : 0.0;
    const double rstd = nr ? std::sqrt(sr / static_cast<double>(nr)) : 0.0;
    const double gam = lstd / std::max(rstd, 1e-12);
    const double rhat = (e1 * e1) / std::max(e2, 1e-24);
    const double rnorm = rhat * (gam * gam * gam + 1.0) * (gam + 1.0) /
                         ((gam * gam + 1.0) * (gam * gam + 1.0));
    const auto& table = gamma_ratio_table();
    size_t best = 0;
    double bd = std::abs(1.0 / table[0] - rnorm);
    for (size_t i = 1; i < table.size(); ++i) {
        const double d = std::abs(1.0 / table[i] - rnorm);
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    const double alpha = grid_alpha(best);
    const double lg1 = std::lgamma(1.0 / alpha), lg2 = std::lgamma(2.0 / alpha), lg3 = std::lgamma(3.0 / alpha);
    out[0] = alpha;
    out[1] = (rstd - lstd) * std::exp(lg2 - lg1) * std::exp(0.5 * (lg1 - lg3));
    out[2] = lstd * lstd;
    out[3] = rstd * rstd;
}

inline idx reflect_index(idx i, idx n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

// same-size separable Gaussian filter with mirrored borders
inline std::vector<double> blur_same(const std::vector<double>& img, idx h, idx w, const std::vector<double>& taps) {
    const idx n = static_cast<idx>(taps.size()), r = n / 2;
    std::vector<double> rows(img.size()), out(img.size());
    for (idx y = 0; y < h; ++y)
        for (idx x = 0; x < w; ++x) {
            double s = 0.0;
            for (idx k = 0; k < n; ++k)
                s += taps[static_cast<size_t>(k)] * img[static_cast<size_t>(y * w + reflect_index(x + k - r, w))];
            rows[static_cast<size_t>(y * w + x)] = s;
        }
    for (idx y = 0; y < h; ++y)
        for (idx x = 0; x < w; ++x) {
            double s = 0.0;
            for (idx k = 0; k < n; ++k)
                s += taps[static_cast<size_t>(k)] * rows[static_cast<size_t>(reflect_index(y + k - r, h) * w + x)];
            out[static_cast<size_t>(y * w + x)] = s;
        }
    return out;
}

inline std::vector<double> gauss7_taps() {
    std::vector<double> t(7);
    const double sigma = 7.0 / 6.0;
    double s = 0.0;
    for (idx i = 0; i < 7; ++i) {
        const double d = static_cast<double>(i) - 3.0;
        t[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        s += t[static_cast<size_t>(i)];
    }
    for (auto& v : t) v /= s;
    return t;
}

// mean-subtracted contrast-normalized coefficients of one plane
inline std::vector<double> mscn(const std::vector<double>& img, idx h, idx w) {
    const auto taps = gauss7_taps();
    const auto mu = blur_same(img, h, w, taps);
    std::vector<double> sq(img.size());
    for (size_t i = 0; i < img.size(); ++i) sq[i] = img[i] * img[i];
    const auto musq = blur_same(sq, h, w, taps);
    std::vector<double> out(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
        const double var = std::max(musq[i] - mu[i] * mu[i], 0.0);
        out[i] = (img[i] - mu[i]) / (std::sqrt(var) + 1.0);
    }
    return out;
}

// 18 features of one block of MSCN coefficients: GGD of the coefficients and
// AGGD of the four neighbour products (horizontal, vertical, two diagonals)
inline void block_features(const std::vector<double>& m, idx h, idx w, idx y0, idx x0, idx bsz, double* out) {
    std::vector<double> cells(static_cast<size_t>(bsz * bsz));
    for (idx y = 0; y < bsz; ++y)
        for (idx x = 0; x < bsz; ++x)
            cells[static_cast<size_t>(y * bsz + x)] = m[static_cast<size_t>((y0 + y) * w + (x0 + x))];
    (void)h;
    fit_ggd(cells, &out[0], &out[1]);
    const idx shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    std::vector<double> prod;
    for (int s = 0; s < 4; ++s) {
        prod.clear();
        for (idx y = 0; y < bsz; ++y)
            for (idx x = 0; x < bsz; ++x) {
                const idx yy = y + shifts[s][0], xx = x + shifts[s][1];
                if (yy < 0 || yy >= bsz || xx < 0 || xx >= bsz) continue;
                prod.push_back(cells[static_cast<size_t>(y * bsz + x)] * cells[static_cast<size_t>(yy * bsz + xx)]);
            }
        fit_aggd(prod, &out[2 + 4 * s]);
    }
}

inline std::vector<double> half_scale(const std::vector<double>& img, idx h, idx w, idx* oh, idx* ow) {
    *oh = h / 2;
    *ow = w / 2;
    std::vector<double> out(static_cast<size_t>(*oh * *ow));
    for (idx y = 0; y < *oh; ++y)
        for (idx x = 0; x < *ow; ++x)
            out[static_cast<size_t>(y * *ow + x)] =
                0.25 * (img[static_cast<size_t>(2 * y * w + 2 * x)] + img[static_cast<size_t>(2 * y * w + 2 * x + 1)] +
                        img[static_cast<size_t>((2 * y + 1) * w + 2 * x)] +
                        img[static_cast<size_t>((2 * y + 1) * w + 2 * x + 1)]);
    return out;
}

// one row of 36 features per complete block of one band
inline std::vector<std::vector<double>> band_feature_rows(const HSICube& cube, idx band, idx block) {
    const idx h = cube.height, w = cube.width;
    if (block < 8 || block % 2 != 0) throw std::invalid_argument("niqe: block edge must be even and at least 8");
    const idx nby = h / block, nbx = w / block;
    if (nby < 1 || nbx < 1) throw std::invalid_argument("niqe: patch smaller than one feature block");
    std::vector<double> plane(static_cast<size_t>(h * w));
    const float* bp = cube.band_ptr(band);
    for (idx i = 0; i < h * w; ++i) plane[static_cast<size_t>(i)] = static_cast<double>(bp[i]);
    const auto m1 = mscn(plane, h, w);
    idx h2 = 0, w2 = 0;
    const auto small = half_scale(plane, h, w, &h2, &w2);
    const auto m2 = mscn(small, h2, w2);
    std::vector<std::vector<double>> rows;
    for (idx by = 0; by < nby; ++by)
        for (idx bx = 0; bx < nbx; ++bx) {
            std::vector<double> f(static_cast<size_t>(kFeatures));
            block_features(m1, h, w, by * block, bx * block, block, f.data());
            block_features(m2, h2, w2, by * block / 2, bx * block / 2, block / 2, f.data() + 18);
            rows.push_back(std::move(f));
        }
    return rows;
}

inline void mean_and_cov(const std::vector<std::vector<double>>& rows, Eigen::VectorXd* mean, Eigen::MatrixXd* cov) {
    const idx n = static_cast<idx>(rows.size()), d = kFeatures;
    *mean = Eigen::VectorXd::Zero(d);
    for (const auto& r : rows)
        for (idx j = 0; j < d; ++j) (*mean)(j) += r[static_cast<size_t>(j)];
    *mean /= static_cast<double>(n);
    *cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& r : rows) {
        Eigen::VectorXd c(d);
        for (idx j = 0; j < d; ++j) c(j) = r[static_cast<size_t>(j)] - (*mean)(j);
        *cov += c * c.transpose();
    }
    *cov /= static_cast<double>(n - 1);
}

inline double mahalanobis(const Eigen::VectorXd& delta, const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    const auto& ev = eig.eigenvalues();
    const double tol = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * 1e-10;
    Eigen::VectorXd proj = eig.eigenvectors().transpose() * delta;
    double d2 = 0.0;
    for (idx i = 0; i < ev.size(); ++i)
        if (ev(i) > tol) d2 += proj(i) * proj(i) / ev(i);
    return std::sqrt(std::max(d2, 0.0));
}

} // namespace detail_niqe

// fit the pristine-feature Gaussian from every band of every supplied cube
inline NiqeModel fit_niqe(std::span<const HSICube> pristine, idx block = 16) {
    if (pristine.empty()) throw std::invalid_argument("niqe fit: no cubes supplied");
    std::vector<std::vector<double>> rows;
    for (const auto& c : pristine)
        for (idx b = 0; b < c.bands; ++b) {
            auto r = detail_niqe::band_feature_rows(c, b, block);
            rows.insert(rows.end(), r.begin(), r.end());
        }
    if (rows.size() < 2) throw std::invalid_argument("niqe fit: need at least two feature blocks");
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    detail_niqe::mean_and_cov(rows, &mean, &cov);
    NiqeModel m;
    m.fitted = true;
    m.block = block;
    m.mean.assign(mean.data(), mean.data() + detail_niqe::kFeatures);
    m.cov.resize(static_cast<size_t>(detail_niqe::kFeatures * detail_niqe::kFeatures));
    for (idx i = 0; i < detail_niqe::kFeatures; ++i)
        for (idx j = 0; j < detail_niqe::kFeatures; ++j)
            m.cov[static_cast<size_t>(i * detail_niqe::kFeatures + j)] = cov(i, j);
    return m;
}

// per-band NIQE distance to the pristine model, averaged over bands
inline double niqe_score(const NiqeModel& model, const HSICube& cube) {
    if (!model.fitted) throw std::logic_error("niqe: model not fitted");
    const idx d = detail_niqe::kFeatures;
    Eigen::VectorXd mp(d);
    Eigen::MatrixXd cp(d, d);
    for (idx i = 0; i < d; ++i) mp(i) = model.mean[static_cast<size_t>(i)];
    for (idx i = 0; i < d; ++i)
        for (idx j = 0; j < d; ++j) cp(i, j) = model.cov[static_cast<size_t>(i * d + j)];
    double total = 0.0;
    for (idx b = 0; b < cube.bands; ++b) {
        auto rows = detail_niqe::band_feature_rows(cube, b, model.block);
        if (rows.size() < 2) throw std::invalid_argument("niqe: too few blocks in patch; use a smaller block edge");
        Eigen::VectorXd mt;
        Eigen::MatrixXd ct;
        detail_niqe::mean_and_cov(rows, &mt, &ct);
        total += detail_niqe::mahalanobis(mp - mt, 0.5 * (cp + ct));
    }
    return total / static_cast<double>(cube.bands);
}

// pluggable no-reference sharpness score; the default is a constant stand-in,
// so absolute perceptual-index values are only comparable within this repo
struct SharpnessScorer {
    std::function<double(const HSICube&)> score;
    std::string tag;
    bool placeholder = false;
};

inline SharpnessScorer constant_sharpness(double value = 5.0) {
    SharpnessScorer s;
    s.score = [value](const HSICube&) { return value; };
    s.tag = "constant-" + std::to_string(value);
    s.placeholder = true;
    return s;
}

// half of (10 - sharpness) + naturalness, the usual perception-distortion mix
inline double perceptual_index(const NiqeModel& model, const HSICube& sr,
                               const SharpnessScorer& sharpness = constant_sharpness()) {
    if (!model.fitted) throw std::logic_error("perceptual_index: naturalness model not fitted");
    return 0.5 * ((10.0 - sharpness.score(sr)) + niqe_score(model, sr));
}

} // namespace legan
