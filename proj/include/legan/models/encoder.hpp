// Latent encoder: eight conv layers whose channel width steps up a fixed
// schedule (striding by 2 at each step-up), global average pooling, and two
// dense layers. Maps any spatial size to a fixed-length latent vector; the
// same map is applied to reference and generated patches so their latent
// distance is comparable.
#pragma once

#include <cstdint>
#include <string>

#include "legan/core/nn_ops.hpp"
#include "legan/core/ops.hpp"
#include "legan/models/config.hpp"
#include "legan/models/weights.hpp"

namespace legan {

struct EncoderWeights {
    EncoderConfig config;
    ParamStore params;
    std::uint64_t init_seed = 0;
};

inline EncoderWeights init_weights(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    EncoderWeights w;
    w.config = cfg;
    w.init_seed = seed;
    Rng rng(mix_seed(seed, 0x656e63));
    idx in_c = cfg.bands;
    for (size_t i = 0; i < cfg.channel_schedule.size(); ++i) {
        init::add_conv(w.params, "conv" + std::to_string(i), cfg.channel_schedule[i], in_c, 3, 3, rng);
        in_c = cfg.channel_schedule[i];
    }
    init::add_dense(w.params, "fc1", cfg.latent_dim, cfg.channel_schedule.back(), rng);
    init::add_dense(w.params, "fc2", cfg.latent_dim, cfg.latent_dim, rng);
    return w;
}

// x: [N, bands, H, W] -> [N, latent_dim]
template <typename T>
Var<T> encoder_graph(Tape<T>& t, const EncoderConfig& cfg, const BoundParams<T>& p, Var<T> x) {
    const Tensor<T>& xv = t.val(x);
    if (xv.ndim() != 4 || xv.dim(1) != cfg.bands) throw std::invalid_argument("encoder: expected [N, bands, H, W] input");
    auto h = x;
    for (size_t i = 0; i < cfg.channel_schedule.size(); ++i) {
        const std::string name = "conv" + std::to_string(i);
        h = ad::conv2d(t, h, p.var(name + ".w"), p.var(name + ".b"), ad::same_pad(3, 3, cfg.conv_stride(i)));
        h = ad::relu(t, h);
    }
    h = ad::global_avg_pool(t, h);
    h = ad::matmul(t, h, p.var("fc1.w"), false, true);
    h = ad::relu(t, ad::add_bias_rows(t, h, p.var("fc1.b")));
    h = ad::matmul(t, h, p.var("fc2.w"), false, true);
    return ad::add_bias_rows(t, h, p.var("fc2.b"));
}

inline Tensor<float> encoder_forward(const EncoderWeights& w, const Tensor<float>& x) {
    Tape<float> t;
    auto p = bind_params(t, w.params, false);
    return t.val(encoder_graph(t, w.config, p, t.constant(x)));
}

} // namespace legan
