// Critic network: an input conv, a chain of conv + batch-norm + relu blocks
// with periodic stride-2 downsampling and channel doubling, and a two-layer
// dense head producing one unbounded score per sample. Besides the score, the
// forward pass exposes the feature taps used by the perceptual losses and the
// training diagnostics.
#pragma once

#include <cstdint>
#include <string>

#include "legan/core/nn_ops.hpp"
#include "legan/core/ops.hpp"
#include "legan/models/config.hpp"
#include "legan/models/weights.hpp"

namespace legan {

struct DiscriminatorWeights {
    DiscriminatorConfig config;
    ParamStore params;
    std::uint64_t init_seed = 0;
};

inline DiscriminatorWeights init_weights(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DiscriminatorWeights w;
    w.config = cfg;
    w.init_seed = seed;
    Rng rng(mix_seed(seed, 0x637274));
    init::add_conv(w.params, "head", cfg.base_channels, cfg.bands, 3, 3, rng);
    idx in_c = cfg.base_channels;
    for (idx i = 0; i < cfg.n_maxpool_blocks; ++i) {
        const std::string p = "block" + std::to_string(i);
        const idx out_c = cfg.block_channels(i);
        init::add_conv(w.params, p, out_c, in_c, 3, 3, rng);
        init::add_batchnorm(w.params, p + ".bn", out_c);
        in_c = out_c;
    }
    init::add_dense(w.params, "fc1", cfg.dense_width, cfg.flatten_width(), rng);
    init::add_dense(w.params, "fc2", 1, cfg.dense_width, rng);
    return w;
}

template <typename T>
struct CriticTapVars {
    Var<T> score;       // [N], no bounded activation
    Var<T> feat_mu;     // input-conv feature maps, before any block
    Var<T> feat_phi;    // last block output, pre-activation
    Var<T> penultimate; // [N, C*h*w] flattened post-activation last block
    Var<T> pen_maps;    // same activations unflattened [N, C, h, w]
};

template <typename T>
CriticTapVars<T> discriminator_graph(Tape<T>& t, const DiscriminatorConfig& cfg, const BoundParams<T>& p,
                                     Var<T> x, bool training) {
    const Tensor<T>& xv = t.val(x);
    if (xv.ndim() != 4 || xv.dim(1) != cfg.bands) throw std::invalid_argument("critic: expected [N, bands, H, W] input");
    if (xv.dim(2) != cfg.input_size || xv.dim(3) != cfg.input_size)
        throw std::invalid_argument("critic: input spatial size " + std::to_string(xv.dim(2)) + "x" +
                                    std::to_string(xv.dim(3)) + " does not match configured size " +
                                    std::to_string(cfg.input_size));
    CriticTapVars<T> taps;
    auto h = ad::conv2d(t, x, p.var("head.w"), p.var("head.b"), ad::same_pad(3, 3));
    h = ad::relu(t, h);
    taps.feat_mu = h;
    for (idx i = 0; i < cfg.n_maxpool_blocks; ++i) {
        const std::string name = "block" + std::to_string(i);
        h = ad::conv2d(t, h, p.var(name + ".w"), p.var(name + ".b"), ad::same_pad(3, 3, cfg.block_stride(i)));
        h = ad::batchnorm2d(t, h, p.var(name + ".bn.gamma"), p.var(name + ".bn.beta"),
                            p.stat(name + ".bn.running_mean"), p.stat(name + ".bn.running_var"), T(0.9), T(1e-5),
                            training);
        if (i == cfg.n_maxpool_blocks - 1) taps.feat_phi = h;
        h = ad::relu(t, h);
    }
    taps.pen_maps = h;
    const Tensor<T>& hv = t.val(h);
    taps.penultimate = ad::reshape(t, h, {hv.dim(0), hv.dim(1) * hv.dim(2) * hv.dim(3)});
    auto d = ad::matmul(t, taps.penultimate, p.var("fc1.w"), false, true);
    d = ad::relu(t, ad::add_bias_rows(t, d, p.var("fc1.b")));
    d = ad::matmul(t, d, p.var("fc2.w"), false, true);
    d = ad::add_bias_rows(t, d, p.var("fc2.b"));
    taps.score = ad::reshape(t, d, {t.val(d).dim(0)});
    if (cfg.sigmoid_output) taps.score = ad::sigmoid(t, taps.score);
    return taps;
}

struct DiscriminatorTaps {
    Tensor<float> score;       // [N]
    Tensor<float> feat_mu;     // [N, base, S, S]
    Tensor<float> feat_phi;    // [N, C, s, s]
    Tensor<float> penultimate; // [N, C*s*s]
};

// evaluation-mode forward: batch-norm uses running statistics, so identical
// inputs give identical taps regardless of batch composition
inline DiscriminatorTaps discriminator_forward(const DiscriminatorWeights& w, const Tensor<float>& x) {
    Tape<float> t;
    auto p = bind_params(t, w.params, false);
    auto taps = discriminator_graph(t, w.config, p, t.constant(x), false);
    return DiscriminatorTaps{t.val(taps.score), t.val(taps.feat_mu), t.val(taps.feat_phi), t.val(taps.penultimate)};
}

} // namespace legan
