// Singular-value spectrum of a feature batch, used as a mode-concentration
// diagnostic: the flatter the spectrum, the more diverse the features.
#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "legan/core/tensor.hpp"

namespace legan {

struct ModeSpectrum {
    std::vector<double> values; // descending singular values
    bool degenerate = false;    // all-zero input
};

// accepts [N, C, H, W] maps (reshaped to positions x channels) or an already
// flattened 2-D matrix
template <typename T>
ModeSpectrum svd_mode_spectrum(const Tensor<T>& features) {
    idx rows = 0, cols = 0;
    if (features.ndim() == 4) {
        rows = features.dim(0) * features.dim(2) * features.dim(3);
        cols = features.dim(1);
    } else if (features.ndim() == 2) {
        rows = features.dim(0);
        cols = features.dim(1);
    } else {
        throw std::invalid_argument("mode spectrum: want [N, C, H, W] maps or a 2-D matrix");
    }
    if (rows == 0 || cols == 0) throw std::invalid_argument("mode spectrum: empty input");

    Eigen::MatrixXd m(rows, cols);
    if (features.ndim() == 2) {
        for (idx i = 0; i < rows; ++i)
            for (idx j = 0; j < cols; ++j) m(i, j) = static_cast<double>(features.at2(i, j));
    } else {
        const idx n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
        for (idx s = 0; s < n; ++s)
            for (idx ch = 0; ch < c; ++ch)
                for (idx p = 0; p < h * w; ++p)
                    m(s * h * w + p, ch) = static_cast<double>(features.ptr()[(s * c + ch) * h * w + p]);
    }

    ModeSpectrum out;
    if (m.cwiseAbs().maxCoeff() == 0.0) {
        out.values.assign(static_cast<size_t>(std::min(rows, cols)), 0.0);
        out.degenerate = true;
        return out;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    out.values.assign(sv.data(), sv.data() + sv.size());
    std::sort(out.values.begin(), out.values.end(), std::greater<double>());
    return out;
}

} // namespace legan
