// Super-resolution generator: band-spanning input conv, a chain of scaled
// residual blocks, sub-pixel upscaling, and a channel decoder, with an
// optional bicubic skip so the network starts from interpolation and learns
// the residual detail.
#pragma once

#include <cstdint>
#include <string>

#include "legan/core/nn_ops.hpp"
#include "legan/core/ops.hpp"
#include "legan/hsi/batch.hpp"
#include "legan/models/config.hpp"
#include "legan/models/weights.hpp"

namespace legan {

struct GeneratorWeights {
    GeneratorConfig config;
    ParamStore params;
    std::uint64_t init_seed = 0;
};

inline idx upscale_stage_count(const GeneratorConfig& cfg) {
    if (cfg.single_stage_upscale) return 1;
    idx stages = 0;
    for (idx k = cfg.scale; k > 1; k /= 2) ++stages;
    return stages;
}

// channel expansion of upscale stage s: intermediate x2 stages keep the trunk
// width, the final stage widens to feature_width * bands before the shuffle;
// resize-convolution stages upsample first, so their convs skip the k^2 factor
inline void upscale_stage_dims(const GeneratorConfig& cfg, idx s, idx& conv_out, idx& shuffle_k) {
    const idx stages = upscale_stage_count(cfg);
    const idx post = (s == stages - 1) ? cfg.feature_width * cfg.bands : cfg.feature_width;
    if (cfg.progressive_resize) {
        shuffle_k = 1;
        conv_out = post;
        return;
    }
    shuffle_k = cfg.single_stage_upscale ? cfg.scale : 2;
    conv_out = post * shuffle_k * shuffle_k;
}

inline GeneratorWeights init_weights(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    GeneratorWeights w;
    w.config = cfg;
    w.init_seed = seed;
    Rng rng(mix_seed(seed, 0x67656e)); // per-network stream
    init::add_conv(w.params, "head", cfg.feature_width, cfg.bands, cfg.first_kernel, cfg.first_kernel, rng);
    for (idx i = 0; i < cfg.n_resblocks; ++i) {
        const std::string p = "res" + std::to_string(i);
        init::add_conv(w.params, p + ".conv1", cfg.feature_width, cfg.feature_width, 3, 3, rng);
        init::add_conv(w.params, p + ".conv2", cfg.feature_width, cfg.feature_width, 3, 3, rng);
        w.params.add(p + ".scale", Tensor<float>({1}, static_cast<float>(cfg.residual_scale)), false);
    }
    for (idx s = 0; s < upscale_stage_count(cfg); ++s) {
        idx conv_out = 0, k = 0;
        upscale_stage_dims(cfg, s, conv_out, k);
        init::add_conv(w.params, "up" + std::to_string(s), conv_out, cfg.feature_width, 3, 3, rng);
    }
    init::add_conv(w.params, "tail", cfg.bands, cfg.feature_width * cfg.bands, 1, 1, rng);
    if (cfg.bicubic_skip) {
        // with the interpolation skip present, a near-zero decoder makes the
        // initial output track the interpolation instead of init noise
        for (auto& v : w.params.at("tail.w").data) v *= 1e-3f;
    }
    return w;
}

// out = x + scale * conv2(relu(conv1(x)))
template <typename T>
Var<T> resblock_graph(Tape<T>& t, const BoundParams<T>& p, const std::string& prefix, Var<T> x) {
    auto h = ad::conv2d(t, x, p.var(prefix + ".conv1.w"), p.var(prefix + ".conv1.b"), ad::same_pad(3, 3));
    h = ad::relu(t, h);
    h = ad::conv2d(t, h, p.var(prefix + ".conv2.w"), p.var(prefix + ".conv2.b"), ad::same_pad(3, 3));
    const T s = t.val(p.var(prefix + ".scale"))[0];
    return ad::add(t, x, ad::scale(t, h, s));
}

// x: [N, bands, h, w]; skip: bicubic-upsampled x (required when the config
// enables the skip, ignored otherwise); returns [N, bands, h*k, w*k]
template <typename T>
Var<T> generator_graph(Tape<T>& t, const GeneratorConfig& cfg, const BoundParams<T>& p, Var<T> x,
                           Var<T> skip = {}) {
    if (t.val(x).dim(1) != cfg.bands) throw std::invalid_argument("generator: input band count mismatch");
    auto h = ad::conv2d(t, x, p.var("head.w"), p.var("head.b"), ad::same_pad(cfg.first_kernel, cfg.first_kernel));
    for (idx i = 0; i < cfg.n_resblocks; ++i) h = resblock_graph(t, p, "res" + std::to_string(i), h);
    for (idx s = 0; s < upscale_stage_count(cfg); ++s) {
        idx conv_out = 0, k = 0;
        upscale_stage_dims(cfg, s, conv_out, k);
        const std::string name = "up" + std::to_string(s);
        if (cfg.progressive_resize) {
            h = ad::bilinear_up2(t, h);
            h = ad::conv2d(t, h, p.var(name + ".w"), p.var(name + ".b"), ad::same_pad(3, 3));
        } else {
            h = ad::conv2d(t, h, p.var(name + ".w"), p.var(name + ".b"), ad::same_pad(3, 3));
            h = ad::pixel_shuffle(t, h, k);
        }
    }
    h = ad::conv2d(t, h, p.var("tail.w"), p.var("tail.b"), ad::same_pad(1, 1));
    if (cfg.bicubic_skip) {
        if (!skip.valid()) throw std::invalid_argument("generator: bicubic skip enabled but no skip tensor given");
        h = ad::add(t, h, skip);
    }
    return h;
}

// evaluation-mode forward on a batch tensor
inline Tensor<float> generator_forward(const GeneratorWeights& w, const Tensor<float>& lr) {
    if (lr.ndim() != 4) throw std::invalid_argument("generator: expected [N, C, H, W] input");
    Tape<float> t;
    auto p = bind_params(t, w.params, false);
    auto x = t.constant(lr);
    Var<float> skip;
    if (w.config.bicubic_skip)
        skip = t.constant(bicubic_resize_batch(lr, lr.dim(2) * w.config.scale, lr.dim(3) * w.config.scale));
    return t.val(generator_graph(t, w.config, p, x, skip));
}

inline std::vector<HSICube> generator_forward(const GeneratorWeights& w, std::span<const HSICube> lr) {
    std::vector<double> wl = lr.empty() ? std::vector<double>{} : lr[0].wavelengths;
    return from_batch(generator_forward(w, to_batch(lr)), wl);
}

} // namespace legan
