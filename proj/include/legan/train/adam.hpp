#pragma once

// Adam optimizer over a ParamStore: per-tensor first and second moments kept
// in float (so checkpoints round-trip bit-exactly), update arithmetic in
// double. Also the hard weight clip used by the plain Wasserstein arm.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "legan/core/tensor.hpp"
#include "legan/models/weights.hpp"

namespace legan {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-7;
};

struct AdamMoments {
    std::vector<Tensor<float>> m; // parallel to store items; empty for non-trainables
    std::vector<Tensor<float>> v;
    idx step_count = 0;
};

inline AdamMoments init_adam(const ParamStore& store) {
    AdamMoments a;
    a.m.resize(store.items.size());
    a.v.resize(store.items.size());
    for (size_t i = 0; i < store.items.size(); ++i)
        if (store.items[i].trainable && !store.items[i].buffer) {
            a.m[i] = Tensor<float>(store.items[i].value.shape, 0.0f);
            a.v[i] = Tensor<float>(store.items[i].value.shape, 0.0f);
        }
    return a;
}

// one update over all trainable tensors; grads is parallel to store items
// (null entries are skipped, e.g. frozen scalars and batch-norm buffers)
inline void adam_step(ParamStore& store, const std::vector<const Tensor<float>*>& grads, AdamMoments& opt,
                      const AdamConfig& cfg) {
    if (grads.size() != store.items.size() || opt.m.size() != store.items.size())
        throw std::invalid_argument("adam: gradient list does not match the parameter store");
    ++opt.step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step_count));
    for (size_t i = 0; i < store.items.size(); ++i) {
        auto& item = store.items[i];
        if (!item.trainable || item.buffer) continue;
        const Tensor<float>* g = grads[i];
        if (!g) continue;
        if (g->shape != item.value.shape)
            throw std::invalid_argument("adam: gradient shape mismatch for " + item.name);
        auto& m = opt.m[i];
        auto& v = opt.v[i];
        for (idx j = 0; j < item.value.numel(); ++j) {
            const double gj = static_cast<double>((*g)[j]);
            const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double step = cfg.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps);
            item.value[j] = static_cast<float>(static_cast<double>(item.value[j]) - step);
        }
    }
}

// clamp every trainable weight into [-c, c]
inline void clip_weights(ParamStore& store, float c) {
    if (!(c > 0.0f)) throw std::invalid_argument("clip: bound must be positive");
    for (auto& item : store.items) {
        if (!item.trainable || item.buffer) continue;
        for (auto& w : item.value.data) w = std::min(c, std::max(-c, w));
    }
}

} // namespace legan
