#pragma once

// Sample-set diversity metrics: the inception score over a pluggable
// probabilistic classifier and the Frechet distance between Gaussian fits of
// two feature clouds. The default classifier is a soft k-means head over
// critic features, fitted by the caller.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "legan/core/rng.hpp"
#include "legan/core/tensor.hpp"
#include "legan/hsi/cube.hpp"

namespace legan {

struct DiversityReport {
    double is_score = 1.0;
    double fid = 0.0;
    bool fid_regularized = false;
    idx n_samples = 0;
    std::string feature_layer;
};

// exp of the mean KL divergence between per-sample class posteriors and the
// batch marginal; probs is [N, C] with rows summing to one
inline double inception_score(const Tensor<double>& probs) {
    if (probs.ndim() != 2 || probs.dim(0) < 1 || probs.dim(1) < 1)
        throw std::invalid_argument("inception_score: need a non-empty [N, C] probability matrix");
    const idx n = probs.dim(0), c = probs.dim(1);
    std::vector<double> marginal(static_cast<size_t>(c), 0.0);
    for (idx i = 0; i < n; ++i) {
        double row = 0.0;
        for (idx j = 0; j < c; ++j) {
            const double p = probs.at2(i, j);
            if (p < 0.0) throw std::invalid_argument("inception_score: negative probability");
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-6)
            throw std::invalid_argument("inception_score: row " + std::to_string(i) + " does not sum to 1");
        for (idx j = 0; j < c; ++j) marginal[static_cast<size_t>(j)] += probs.at2(i, j);
    }
    for (auto& m : marginal) m /= static_cast<double>(n);
    double kl = 0.0;
    for (idx i = 0; i < n; ++i)
        for (idx j = 0; j < c; ++j) {
            const double p = probs.at2(i, j);
            if (p > 0.0) kl += p * std::log(p / marginal[static_cast<size_t>(j)]);
        }
    return std::exp(kl / static_cast<double>(n));
}

inline double inception_score(std::span<const HSICube> samples,
                              const std::function<std::vector<double>(const HSICube&)>& classifier) {
    if (samples.empty()) throw std::invalid_argument("inception_score: empty batch");
    std::vector<double> flat;
    idx c = 0;
    for (const auto& s : samples) {
        auto p = classifier(s);
        if (c == 0) c = static_cast<idx>(p.size());
        if (static_cast<idx>(p.size()) != c)
            throw std::invalid_argument("inception_score: classifier output width changed");
        flat.insert(flat.end(), p.begin(), p.end());
    }
    return inception_score(Tensor<double>({static_cast<idx>(samples.size()), c}, std::move(flat)));
}

// soft k-means classifier over feature vectors: hard Lloyd fit, then class
// posteriors by a distance softmax with a scale calibrated during fitting
struct PatchClassifier {
    Tensor<double> centroids; // [K, D]
    double tau = 1.0;

    idx classes() const { return centroids.ndim() == 2 ? centroids.dim(0) : 0; }

    void fit(const Tensor<double>& feats, idx k, std::uint64_t seed, int iters = 50) {
        if (feats.ndim() != 2) throw std::invalid_argument("classifier fit: features must be [N, D]");
        const idx n = feats.dim(0), d = feats.dim(1);
        if (k < 2 || n < k) throw std::invalid_argument("classifier fit: need at least k samples and k >= 2");
        Rng rng(seed);
        centroids = Tensor<double>({k, d});
        std::vector<idx> picks;
        while (static_cast<idx>(picks.size()) < k) {
            const idx cand = static_cast<idx>(rng.below(static_cast<std::uint64_t>(n)));
            bool dup = false;
            for (idx p : picks) dup = dup || p == cand;
            if (!dup) picks.push_back(cand);
        }
        for (idx c = 0; c < k; ++c)
            for (idx j = 0; j < d; ++j) centroids.at2(c, j) = feats.at2(picks[static_cast<size_t>(c)], j);

        std::vector<idx> assign(static_cast<size_t>(n), 0);
        for (int it = 0; it < iters; ++it) {
            bool moved = false;
            for (idx i = 0; i < n; ++i) {
                idx best = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (idx c = 0; c < k; ++c) {
                    const double dist = sq_dist(feats, i, c);
                    if (dist < bd) {
                        bd = dist;
                        best = c;
                    }
                }
                if (assign[static_cast<size_t>(i)] != best) moved = true;
                assign[static_cast<size_t>(i)] = best;
            }
            Tensor<double> sums({k, d});
            std::vector<idx> counts(static_cast<size_t>(k), 0);
            for (idx i = 0; i < n; ++i) {
                const idx c = assign[static_cast<size_t>(i)];
                ++counts[static_cast<size_t>(c)];
                for (idx j = 0; j < d; ++j) sums.at2(c, j) += feats.at2(i, j);
            }
            for (idx c = 0; c < k; ++c) {
                if (counts[static_cast<size_t>(c)] == 0) {
                    // restart an empty cluster at the point farthest from its centroid
                    idx far = 0;
                    double fd = -1.0;
                    for (idx i = 0; i < n; ++i) {
                        const double dist = sq_dist(feats, i, assign[static_cast<size_t>(i)]);
                        if (dist > fd) {
                            fd = dist;
                            far = i;
                        }
                    }
                    for (idx j = 0; j < d; ++j) centroids.at2(c, j) = feats.at2(far, j);
                    moved = true;
                } else {
                    for (idx j = 0; j < d; ++j)
                        centroids.at2(c, j) = sums.at2(c, j) / static_cast<double>(counts[static_cast<size_t>(c)]);
                }
            }
            if (!moved) break;
        }
        double scale = 0.0;
        for (idx i = 0; i < n; ++i) scale += sq_dist(feats, i, assign[static_cast<size_t>(i)]);
        tau = std::max(scale / static_cast<double>(n), 1e-12);
    }

    // [N, K] row-stochastic posteriors: softmax of -squared-distance / tau
    Tensor<double> predict(const Tensor<double>& feats) const {
        if (classes() == 0) throw std::logic_error("classifier: not fitted");
        if (feats.ndim() != 2 || feats.dim(1) != centroids.dim(1))
            throw std::invalid_argument("classifier: feature width does not match the fit");
        const idx n = feats.dim(0), k = classes();
        Tensor<double> out({n, k});
        for (idx i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            std::vector<double> logits(static_cast<size_t>(k));
            for (idx c = 0; c < k; ++c) {
                logits[static_cast<size_t>(c)] = -sq_dist(feats, i, c) / tau;
                mx = std::max(mx, logits[static_cast<size_t>(c)]);
            }
            double denom = 0.0;
            for (idx c = 0; c < k; ++c) {
                logits[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - mx);
                denom += logits[static_cast<size_t>(c)];
            }
            for (idx c = 0; c < k; ++c) out.at2(i, c) = logits[static_cast<size_t>(c)] / denom;
        }
        return out;
    }

  private:
    double sq_dist(const Tensor<double>& feats, idx row, idx centroid) const {
        double s = 0.0;
        for (idx j = 0; j < feats.dim(1); ++j) {
            const double d = feats.at2(row, j) - centroids.at2(centroid, j);
            s += d * d;
        }
        return s;
    }
};

struct FidResult {
    double value = 0.0;
    bool regularized = false;
};

namespace detail_fid {

inline void mean_and_cov(const Tensor<double>& feats, Eigen::VectorXd* mean, Eigen::MatrixXd* cov) {
    const idx n = feats.dim(0), d = feats.dim(1);
    *mean = Eigen::VectorXd::Zero(d);
    for (idx i = 0; i < n; ++i)
        for (idx j = 0; j < d; ++j) (*mean)(j) += feats.at2(i, j);
    *mean /= static_cast<double>(n);
    *cov = Eigen::MatrixXd::Zero(d, d);
    for (idx i = 0; i < n; ++i) {
        Eigen::VectorXd c(d);
        for (idx j = 0; j < d; ++j) c(j) = feats.at2(i, j) - (*mean)(j);
        *cov += c * c.transpose();
    }
    *cov /= static_cast<double>(n - 1);
}

// trace of the matrix square root of c1*c2, computed on the symmetrized
// product sqrt(c1) * c2 * sqrt(c1)
inline double trace_sqrt_product(const Eigen::MatrixXd& c1, const Eigen::MatrixXd& c2) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(0.5 * (c1 + c1.transpose()));
    Eigen::VectorXd root_ev = e1.eigenvalues();
    for (idx i = 0; i < root_ev.size(); ++i) root_ev(i) = std::sqrt(std::max(root_ev(i), 0.0));
    const Eigen::MatrixXd s = e1.eigenvectors() * root_ev.asDiagonal() * e1.eigenvectors().transpose();
    const Eigen::MatrixXd prod = s * c2 * s;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(0.5 * (prod + prod.transpose()));
    double tr = 0.0;
    for (idx i = 0; i < e2.eigenvalues().size(); ++i) tr += std::sqrt(std::max(e2.eigenvalues()(i), 0.0));
    return tr;
}

inline double fid_once(const Eigen::VectorXd& m1, const Eigen::MatrixXd& c1, const Eigen::VectorXd& m2,
                       const Eigen::MatrixXd& c2) {
    return (m1 - m2).squaredNorm() + c1.trace() + c2.trace() - 2.0 * trace_sqrt_product(c1, c2);
}

} // namespace detail_fid

// Frechet distance between Gaussian fits of two [N, D] feature clouds; a
// non-finite matrix root triggers one diagonal regularization, flagged
inline FidResult fid_from_features(const Tensor<double>& real, const Tensor<double>& gen) {
    if (real.ndim() != 2 || gen.ndim() != 2) throw std::invalid_argument("fid: features must be [N, D]");
    if (real.dim(1) != gen.dim(1)) throw std::invalid_argument("fid: feature dimensions differ");
    if (real.dim(0) < 2 || gen.dim(0) < 2) throw std::invalid_argument("fid: need at least 2 samples per side");
    for (double v : real.data)
        if (!std::isfinite(v)) throw std::invalid_argument("fid: non-finite feature value");
    for (double v : gen.data)
        if (!std::isfinite(v)) throw std::invalid_argument("fid: non-finite feature value");

    Eigen::VectorXd m1, m2;
    Eigen::MatrixXd c1, c2;
    detail_fid::mean_and_cov(real, &m1, &c1);
    detail_fid::mean_and_cov(gen, &m2, &c2);
    FidResult r;
    r.value = detail_fid::fid_once(m1, c1, m2, c2);
    if (!std::isfinite(r.value)) {
        const double eps = 1e-6;
        const Eigen::MatrixXd bump = eps * Eigen::MatrixXd::Identity(c1.rows(), c1.cols());
        r.value = std::max(detail_fid::fid_once(m1, c1 + bump, m2, c2 + bump), 0.0);
        r.regularized = true;
    }
    return r;
}

inline std::string format_report(const DiversityReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "is = " << r.is_score << "\n";
    os << "fid = " << r.fid << (r.fid_regularized ? " (covariances regularized)" : "") << "\n";
    os << "n_samples = " << r.n_samples << "\n";
    if (!r.feature_layer.empty()) os << "feature_layer = " << r.feature_layer << "\n";
    return os.str();
}

} // namespace legan
