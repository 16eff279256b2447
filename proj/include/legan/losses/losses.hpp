// Training objectives. The composite loss is a weighted sum of four parts:
// a contextual spectral term over early critic features, a texture term over
// late critic features, a Wasserstein adversarial term, and a latent-distance
// regulariser. A cross-entropy pair is provided for the comparison arm that
// trains with the classic saturating GAN objective.
#pragma once

#include <stdexcept>
#include <utility>

#include "legan/core/ops.hpp"
#include "legan/core/tensor.hpp"

namespace legan {

struct LossWeights {
    double lambda_spectral = 12.5;
    double eta_spatial = 12.5;
    double sigma_adversarial = 0.0063;
    double mu_latent = 0.015;

    void validate() const {
        if (lambda_spectral < 0 || eta_spatial < 0 || sigma_adversarial < 0 || mu_latent < 0)
            throw std::invalid_argument("loss weights must be non-negative");
        if (lambda_spectral == 0 && eta_spatial == 0 && sigma_adversarial == 0 && mu_latent == 0)
            throw std::invalid_argument("loss weights must not all be zero");
    }
};

struct LossBreakdown {
    double spectral = 0.0;
    double spatial = 0.0;
    double adversarial = 0.0;
    double latent = 0.0;
    double total = 0.0;
};

inline LossBreakdown make_breakdown(double spectral, double spatial, double adversarial, double latent,
                                    const LossWeights& w) {
    w.validate();
    LossBreakdown b{spectral, spatial, adversarial, latent, 0.0};
    b.total = w.lambda_spectral * spectral + w.eta_spatial * spatial + w.sigma_adversarial * adversarial +
              w.mu_latent * latent;
    return b;
}

// how the pairwise similarity matrix of the contextual loss is formed:
//   feature_pairs  - cosine between per-position feature vectors of the
//                    generated and reference maps (default)
//   residual_pairs - cosine between the per-position feature residual and the
//                    per-position pixel residual (upsampled input minus
//                    reference); requires feature channels == band count
enum class SpectralMode { feature_pairs, residual_pairs };

namespace detail_loss {

// columns of a [C, P] matrix scaled to unit norm; a tiny floor under the
// squared norm keeps all-zero columns finite and differentiable
template <typename T>
Var<T> normalize_columns(Tape<T>& t, Var<T> m) {
    auto sq = ad::mul(t, m, m);
    auto norms = ad::sqrt_(t, ad::add_scalar(t, ad::col_sum(t, sq), T(1e-24)));
    return ad::scale_cols(t, m, ad::recip(t, norms));
}

// one sample of the contextual loss given two [C, P] position-vector matrices
template <typename T>
Var<T> contextual_sample(Tape<T>& t, Var<T> a, Var<T> b, idx n_bands) {
    auto an = normalize_columns(t, a);
    auto bn = normalize_columns(t, b);
    auto cos = ad::matmul(t, an, bn, true, false); // [P, P], c_ij = cos(a_i, b_j)
    auto denom = ad::add_scalar(t, ad::row_min(t, cos), T(1e-5));
    auto ratio = ad::scale_rows(t, cos, ad::recip(t, denom)); // b_ij = c_ij / (min_k c_ik + 1e-5)
    auto logits = ad::scale(t, ad::add_scalar(t, ad::neg(t, ratio), T(1)), T(1) / static_cast<T>(n_bands));
    auto affinity = ad::row_softmax(t, logits);
    auto matched = ad::mean_all(t, ad::col_max(t, affinity));
    return ad::neg(t, ad::log_(t, matched));
}

template <typename T>
Var<T> sample_matrix(Tape<T>& t, Var<T> maps, idx n) {
    const Tensor<T>& v = t.val(maps);
    return ad::reshape(t, ad::select_sample(t, maps, n), {v.dim(1), v.dim(2) * v.dim(3)});
}

} // namespace detail_loss

// Contextual similarity loss over early critic feature maps [N, C, H, W].
// Per sample: pairwise cosine matrix -> each row scaled by its own minimum
// -> row softmax of (1 - ratio) / n_bands -> negative log of the mean column
// maximum. Always finite: the result lies in [0, log(H*W)]. Batch mean.
// In residual_pairs mode the second matrix is the pixel residual
// (lr_up - hr), which must share the maps' spatial size and have as many
// bands as the features have channels.
template <typename T>
Var<T> spectral_contextual_loss(Tape<T>& t, Var<T> feat_sr, Var<T> feat_hr, idx n_bands,
                                SpectralMode mode = SpectralMode::feature_pairs, Var<T> lr_up = {}, Var<T> hr = {}) {
    const Tensor<T>& vs = t.val(feat_sr);
    check_same_shape(vs, t.val(feat_hr), "spectral loss features");
    if (vs.ndim() != 4) throw std::invalid_argument("spectral loss: want [N, C, H, W] feature maps");
    if (n_bands < 1) throw std::invalid_argument("spectral loss: band count must be positive");
    const idx n = vs.dim(0);

    if (mode == SpectralMode::residual_pairs) {
        if (!lr_up.valid() || !hr.valid())
            throw std::invalid_argument("spectral loss: residual_pairs mode needs the upsampled input and reference");
        const Tensor<T>& vp = t.val(lr_up);
        check_same_shape(vp, t.val(hr), "spectral loss pixels");
        if (vp.ndim() != 4 || vp.dim(0) != n || vp.dim(2) != vs.dim(2) || vp.dim(3) != vs.dim(3))
            throw std::invalid_argument("spectral loss: pixel tensors must match the feature maps' layout");
        if (vp.dim(1) != vs.dim(1))
            throw std::invalid_argument("spectral loss: residual_pairs mode needs feature channels == band count");
    }

    Var<T> total;
    for (idx i = 0; i < n; ++i) {
        Var<T> first, second;
        if (mode == SpectralMode::feature_pairs) {
            first = detail_loss::sample_matrix(t, feat_sr, i);
            second = detail_loss::sample_matrix(t, feat_hr, i);
        } else {
            first = ad::sub(t, detail_loss::sample_matrix(t, feat_sr, i), detail_loss::sample_matrix(t, feat_hr, i));
            second = ad::sub(t, detail_loss::sample_matrix(t, lr_up, i), detail_loss::sample_matrix(t, hr, i));
        }
        auto li = detail_loss::contextual_sample(t, first, second, n_bands);
        total = total.valid() ? ad::add(t, total, li) : li;
    }
    return ad::scale(t, total, T(1) / static_cast<T>(n));
}

// Mean over samples and positions of the per-position channel-vector L2 norm
// of the late-feature difference.
template <typename T>
Var<T> spatial_texture_loss(Tape<T>& t, Var<T> phi_sr, Var<T> phi_hr) {
    const Tensor<T>& vs = t.val(phi_sr);
    check_same_shape(vs, t.val(phi_hr), "spatial texture loss");
    if (vs.ndim() != 4) throw std::invalid_argument("spatial texture loss: want [N, C, H, W] feature maps");
    const idx n = vs.dim(0);
    auto diff = ad::sub(t, phi_sr, phi_hr);
    auto sq = ad::mul(t, diff, diff);
    Var<T> total;
    for (idx i = 0; i < n; ++i) {
        auto m = detail_loss::sample_matrix(t, sq, i);      // [C, P]
        auto norms = ad::sqrt_(t, ad::col_sum(t, m));       // [P]
        auto mean = ad::mean_all(t, norms);
        total = total.valid() ? ad::add(t, total, mean) : mean;
    }
    return ad::scale(t, total, T(1) / static_cast<T>(n));
}

// critic objective: -(mean(real) - mean(fake)); minimising it drives the
// score gap up
template <typename T>
Var<T> critic_loss(Tape<T>& t, Var<T> scores_real, Var<T> scores_fake) {
    if (t.val(scores_real).numel() == 0 || t.val(scores_fake).numel() == 0)
        throw std::invalid_argument("critic loss: empty score batch");
    return ad::neg(t, ad::sub(t, ad::mean_all(t, scores_real), ad::mean_all(t, scores_fake)));
}

// generator objective on critic scores of generated samples: -mean(fake)
template <typename T>
Var<T> generator_adversarial_loss(Tape<T>& t, Var<T> scores_fake) {
    if (t.val(scores_fake).numel() == 0) throw std::invalid_argument("adversarial loss: empty score batch");
    return ad::neg(t, ad::mean_all(t, scores_fake));
}

// batch mean of the per-sample L2 distance between latent vectors [N, L]
template <typename T>
Var<T> latent_reg_loss(Tape<T>& t, Var<T> latent_hr, Var<T> latent_sr) {
    const Tensor<T>& vh = t.val(latent_hr);
    check_same_shape(vh, t.val(latent_sr), "latent loss");
    if (vh.ndim() != 2) throw std::invalid_argument("latent loss: want [N, L] latent batches");
    auto diff = ad::sub(t, latent_hr, latent_sr);
    auto sq = ad::mul(t, diff, diff);
    return ad::mean_all(t, ad::sqrt_(t, ad::row_sum(t, sq)));
}

// weighted composite with every part kept for logging
template <typename T>
struct CompositeParts {
    Var<T> spectral, spatial, adversarial, latent, total;
};

template <typename T>
CompositeParts<T> ssrp_loss(Tape<T>& t, Var<T> spectral, Var<T> spatial, Var<T> adversarial, Var<T> latent,
                            const LossWeights& w) {
    w.validate();
    CompositeParts<T> parts{spectral, spatial, adversarial, latent, {}};
    auto acc = ad::scale(t, spectral, static_cast<T>(w.lambda_spectral));
    acc = ad::add(t, acc, ad::scale(t, spatial, static_cast<T>(w.eta_spatial)));
    acc = ad::add(t, acc, ad::scale(t, adversarial, static_cast<T>(w.sigma_adversarial)));
    parts.total = ad::add(t, acc, ad::scale(t, latent, static_cast<T>(w.mu_latent)));
    return parts;
}

// classic cross-entropy GAN pair on unbounded scores (sigmoid applied here):
//   d = -mean log s(real) - mean log(1 - s(fake))
//   g = -mean log s(fake)
template <typename T>
std::pair<Var<T>, Var<T>> js_gan_losses(Tape<T>& t, Var<T> scores_real, Var<T> scores_fake) {
    auto d = ad::add(t, ad::neg(t, ad::mean_all(t, ad::log_sigmoid(t, scores_real))),
                     ad::neg(t, ad::mean_all(t, ad::log_sigmoid(t, ad::neg(t, scores_fake)))));
    auto g = ad::neg(t, ad::mean_all(t, ad::log_sigmoid(t, scores_fake)));
    return {d, g};
}

// scalar conveniences for code that has plain tensors in hand
template <typename T>
T critic_loss_value(const Tensor<T>& real, const Tensor<T>& fake) {
    Tape<T> t;
    return t.val(critic_loss(t, t.constant(real), t.constant(fake)))[0];
}

template <typename T>
T generator_adversarial_loss_value(const Tensor<T>& fake) {
    Tape<T> t;
    return t.val(generator_adversarial_loss(t, t.constant(fake)))[0];
}

template <typename T>
T latent_reg_loss_value(const Tensor<T>& hr, const Tensor<T>& sr) {
    Tape<T> t;
    return t.val(latent_reg_loss(t, t.constant(hr), t.constant(sr)))[0];
}

template <typename T>
T spatial_texture_loss_value(const Tensor<T>& sr, const Tensor<T>& hr) {
    Tape<T> t;
    return t.val(spatial_texture_loss(t, t.constant(sr), t.constant(hr)))[0];
}

template <typename T>
T spectral_contextual_loss_value(const Tensor<T>& sr, const Tensor<T>& hr, idx n_bands,
                                 SpectralMode mode = SpectralMode::feature_pairs, const Tensor<T>* lr_up = nullptr,
                                 const Tensor<T>* hr_pix = nullptr) {
    Tape<T> t;
    Var<T> up, ref;
    if (lr_up) up = t.constant(*lr_up);
    if (hr_pix) ref = t.constant(*hr_pix);
    return t.val(spectral_contextual_loss(t, t.constant(sr), t.constant(hr), n_bands, mode, up, ref))[0];
}

template <typename T>
std::pair<T, T> js_gan_losses_value(const Tensor<T>& real, const Tensor<T>& fake) {
    Tape<T> t;
    auto [d, g] = js_gan_losses(t, t.constant(real), t.constant(fake));
    return {t.val(d)[0], t.val(g)[0]};
}

} // namespace legan
