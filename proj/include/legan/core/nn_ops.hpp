#pragma once

// Network-layer operations on the tape. Convolution is im2col + GEMM;
// the backward pass reuses the cached column matrices (kept only when a
// gradient will actually be pulled through the weights).

#include <memory>

#include "legan/core/ops.hpp"

namespace legan::ad {

struct ConvSpec {
    idx stride = 1;
    idx pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
};

// 'same' output size for odd or even kernels (extra pad goes on the
// bottom/right side, matching the usual asymmetric convention)
inline ConvSpec same_pad(idx kh, idx kw, idx stride = 1) {
    ConvSpec s;
    s.stride = stride;
    s.pad_top = (kh - 1) / 2;
    s.pad_bottom = kh - 1 - s.pad_top;
    s.pad_left = (kw - 1) / 2;
    s.pad_right = kw - 1 - s.pad_left;
    return s;
}

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, idx n, idx kh, idx kw, const ConvSpec& cs, idx ho, idx wo, Tensor<T>& col) {
    const idx C = x.shape[1], H = x.shape[2], W = x.shape[3];
    // col layout: [C*kh*kw, ho*wo]
    T* cp = col.ptr();
    for (idx c = 0; c < C; ++c) {
        for (idx ky = 0; ky < kh; ++ky) {
            for (idx kx = 0; kx < kw; ++kx) {
                for (idx oy = 0; oy < ho; ++oy) {
                    const idx iy = oy * cs.stride - cs.pad_top + ky;
                    const bool row_ok = iy >= 0 && iy < H;
                    for (idx ox = 0; ox < wo; ++ox) {
                        const idx ix = ox * cs.stride - cs.pad_left + kx;
                        *cp++ = (row_ok && ix >= 0 && ix < W) ? x.at4(n, c, iy, ix) : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const Tensor<T>& col, idx n, idx kh, idx kw, const ConvSpec& cs, idx ho, idx wo, Tensor<T>& gx) {
    const idx C = gx.shape[1], H = gx.shape[2], W = gx.shape[3];
    const T* cp = col.ptr();
    for (idx c = 0; c < C; ++c) {
        for (idx ky = 0; ky < kh; ++ky) {
            for (idx kx = 0; kx < kw; ++kx) {
                for (idx oy = 0; oy < ho; ++oy) {
                    const idx iy = oy * cs.stride - cs.pad_top + ky;
                    const bool row_ok = iy >= 0 && iy < H;
                    for (idx ox = 0; ox < wo; ++ox) {
                        const idx ix = ox * cs.stride - cs.pad_left + kx;
                        if (row_ok && ix >= 0 && ix < W) gx.at4(n, c, iy, ix) += *cp;
                        ++cp;
                    }
                }
            }
        }
    }
}

} // namespace detail

// x [N,C,H,W], w [F,C,kh,kw], bias [F] (optional: pass invalid Var)
template <typename T>
Var<T> conv2d(Tape<T>& t, Var<T> x, Var<T> w, Var<T> bias, const ConvSpec& cs) {
    const Tensor<T>& vx = t.val(x);
    const Tensor<T>& vw = t.val(w);
    if (vx.ndim() != 4 || vw.ndim() != 4) throw std::invalid_argument("conv2d: want [N,C,H,W] and [F,C,kh,kw]");
    if (vx.shape[1] != vw.shape[1])
        throw std::invalid_argument("conv2d: channel mismatch " + shape_str(vx.shape) + " vs " + shape_str(vw.shape));
    const idx N = vx.shape[0], H = vx.shape[2], W = vx.shape[3];
    const idx F = vw.shape[0], kh = vw.shape[2], kw = vw.shape[3];
    const idx ho = (H + cs.pad_top + cs.pad_bottom - kh) / cs.stride + 1;
    const idx wo = (W + cs.pad_left + cs.pad_right - kw) / cs.stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output for input " + shape_str(vx.shape));
    const idx ckk = vw.shape[1] * kh * kw;

    const bool ng_x = t.needs_grad(x);
    const bool ng_w = t.needs_grad(w) || (bias.valid() && t.needs_grad(bias));
    const bool keep_cols = ng_w;

    Tensor<T> out(Shape{N, F, ho, wo});
    auto cols = std::make_shared<std::vector<Tensor<T>>>();
    if (keep_cols) cols->reserve(static_cast<size_t>(N));
    {
        Tensor<T> col(Shape{ckk, ho * wo});
        ECMap<T> Wm(vw.ptr(), F, ckk);
        for (idx n = 0; n < N; ++n) {
            detail::im2col(vx, n, kh, kw, cs, ho, wo, col);
            EMap<T> O(out.ptr() + n * F * ho * wo, F, ho * wo);
            ECMap<T> Cm(col.ptr(), ckk, ho * wo);
            O.noalias() = Wm * Cm;
            if (keep_cols) cols->push_back(col);
        }
    }
    if (bias.valid()) {
        const Tensor<T>& vb = t.val(bias);
        if (vb.ndim() != 1 || vb.shape[0] != F) throw std::invalid_argument("conv2d: bias must be [F]");
        for (idx n = 0; n < N; ++n)
            for (idx f = 0; f < F; ++f) {
                T* p = out.ptr() + (n * F + f) * ho * wo;
                const T b = vb[f];
                for (idx i = 0; i < ho * wo; ++i) p[i] += b;
            }
    }

    const bool ng = ng_x || ng_w;
    return t.push(std::move(out), ng, [x, w, bias, cs, cols, N, F, ho, wo, kh, kw, ckk](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& vw2 = tp.val(w);
        if (bias.valid() && tp.needs_grad(bias)) {
            Tensor<T> gb(Shape{F});
            for (idx n = 0; n < N; ++n)
                for (idx f = 0; f < F; ++f) {
                    const T* p = g.ptr() + (n * F + f) * ho * wo;
                    T s = T(0);
                    for (idx i = 0; i < ho * wo; ++i) s += p[i];
                    gb[f] += s;
                }
            tp.accumulate(bias, gb);
        }
        if (tp.needs_grad(w)) {
            Tensor<T> gw(vw2.shape);
            EMap<T> GW(gw.ptr(), F, ckk);
            for (idx n = 0; n < N; ++n) {
                ECMap<T> G(g.ptr() + n * F * ho * wo, F, ho * wo);
                ECMap<T> Cm((*cols)[static_cast<size_t>(n)].ptr(), ckk, ho * wo);
                GW.noalias() += G * Cm.transpose();
            }
            tp.accumulate(w, gw);
        }
        if (tp.needs_grad(x)) {
            const Tensor<T>& vx2 = tp.val(x);
            Tensor<T> gx(vx2.shape);
            Tensor<T> gcol(Shape{ckk, ho * wo});
            ECMap<T> Wm(vw2.ptr(), F, ckk);
            for (idx n = 0; n < N; ++n) {
                ECMap<T> G(g.ptr() + n * F * ho * wo, F, ho * wo);
                EMap<T> GC(gcol.ptr(), ckk, ho * wo);
                GC.noalias() = Wm.transpose() * G;
                detail::col2im_add(gcol, n, kh, kw, cs, ho, wo, gx);
            }
            tp.accumulate(x, gx);
        }
    });
}

// Batch normalization over [N,C,H,W], per-channel statistics.
// running_mean / running_var are plain state tensors updated in place when
// training == true (they are not differentiated through).
template <typename T>
Var<T> batchnorm2d(Tape<T>& t, Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>* running_mean, Tensor<T>* running_var,
                   T momentum, T eps, bool training) {
    const Tensor<T>& vx = t.val(x);
    if (vx.ndim() != 4) throw std::invalid_argument("batchnorm2d: want [N,C,H,W]");
    const idx N = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    const Tensor<T>& vg = t.val(gamma);
    const Tensor<T>& vb = t.val(beta);
    if (vg.shape != Shape{C} || vb.shape != Shape{C}) throw std::invalid_argument("batchnorm2d: gamma/beta must be [C]");
    const idx M = N * H * W;

    auto mean = std::make_shared<Tensor<T>>(Shape{C});
    auto inv_std = std::make_shared<Tensor<T>>(Shape{C});
    if (training) {
        if (M < 2) throw std::invalid_argument("batchnorm2d: need at least 2 samples per channel in training mode");
        for (idx c = 0; c < C; ++c) {
            T s = T(0);
            for (idx n = 0; n < N; ++n)
                for (idx h = 0; h < H; ++h)
                    for (idx w2 = 0; w2 < W; ++w2) s += vx.at4(n, c, h, w2);
            (*mean)[c] = s / static_cast<T>(M);
        }
        for (idx c = 0; c < C; ++c) {
            T s = T(0);
            for (idx n = 0; n < N; ++n)
                for (idx h = 0; h < H; ++h)
                    for (idx w2 = 0; w2 < W; ++w2) {
                        const T d = vx.at4(n, c, h, w2) - (*mean)[c];
                        s += d * d;
                    }
            const T var = s / static_cast<T>(M);
            (*inv_std)[c] = T(1) / std::sqrt(var + eps);
            if (running_mean) (*running_mean)[c] = momentum * (*running_mean)[c] + (T(1) - momentum) * (*mean)[c];
            if (running_var) (*running_var)[c] = momentum * (*running_var)[c] + (T(1) - momentum) * var;
        }
    } else {
        if (!running_mean || !running_var) throw std::invalid_argument("batchnorm2d: eval mode needs running statistics");
        for (idx c = 0; c < C; ++c) {
            (*mean)[c] = (*running_mean)[c];
            (*inv_std)[c] = T(1) / std::sqrt((*running_var)[c] + eps);
        }
    }

    Tensor<T> out(vx.shape);
    auto xhat = std::make_shared<Tensor<T>>(vx.shape);
    for (idx n = 0; n < N; ++n)
        for (idx c = 0; c < C; ++c) {
            const T mu = (*mean)[c], is = (*inv_std)[c], gg = vg[c], bb = vb[c];
            for (idx h = 0; h < H; ++h)
                for (idx w2 = 0; w2 < W; ++w2) {
                    const T xh = (vx.at4(n, c, h, w2) - mu) * is;
                    xhat->at4(n, c, h, w2) = xh;
                    out.at4(n, c, h, w2) = gg * xh + bb;
                }
        }

    const bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
    return t.push(std::move(out), ng, [x, gamma, beta, xhat, inv_std, training, N, C, H, W](Tape<T>& tp, const Tensor<T>& g) {
        const idx M = N * H * W;
        const Tensor<T>& vg2 = tp.val(gamma);
        Tensor<T> gsum(Shape{C});
        Tensor<T> gxhat_sum(Shape{C});
        for (idx n = 0; n < N; ++n)
            for (idx c = 0; c < C; ++c)
                for (idx h = 0; h < H; ++h)
                    for (idx w2 = 0; w2 < W; ++w2) {
                        const T gv = g.at4(n, c, h, w2);
                        gsum[c] += gv;
                        gxhat_sum[c] += gv * xhat->at4(n, c, h, w2);
                    }
        if (tp.needs_grad(beta)) tp.accumulate(beta, gsum);
        if (tp.needs_grad(gamma)) tp.accumulate(gamma, gxhat_sum);
        if (tp.needs_grad(x)) {
            Tensor<T> gx(Shape{N, C, H, W});
            for (idx n = 0; n < N; ++n)
                for (idx c = 0; c < C; ++c) {
                    const T gg = vg2[c], is = (*inv_std)[c];
                    const T mg = gsum[c] / static_cast<T>(M);
                    const T mgx = gxhat_sum[c] / static_cast<T>(M);
                    for (idx h = 0; h < H; ++h)
                        for (idx w2 = 0; w2 < W; ++w2) {
                            const T gv = g.at4(n, c, h, w2);
                            if (training)
                                gx.at4(n, c, h, w2) = gg * is * (gv - mg - xhat->at4(n, c, h, w2) * mgx);
                            else
                                gx.at4(n, c, h, w2) = gg * is * gv;
                        }
                }
            tp.accumulate(x, gx);
        }
    });
}

// [N, C*k*k, H, W] -> [N, C, H*k, W*k]; channel c*k*k + dy*k + dx feeds
// spatial offset (dy, dx) inside each k x k output cell
template <typename T>
Var<T> pixel_shuffle(Tape<T>& t, Var<T> x, idx k) {
    const Tensor<T>& vx = t.val(x);
    if (vx.ndim() != 4) throw std::invalid_argument("pixel_shuffle: want [N,C,H,W]");
    const idx N = vx.shape[0], Cin = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    if (k < 1 || Cin % (k * k) != 0)
        throw std::invalid_argument("pixel_shuffle: channel count " + std::to_string(Cin) + " not divisible by k^2");
    const idx C = Cin / (k * k);
    Tensor<T> out(Shape{N, C, H * k, W * k});
    for (idx n = 0; n < N; ++n)
        for (idx c = 0; c < C; ++c)
            for (idx dy = 0; dy < k; ++dy)
                for (idx dx = 0; dx < k; ++dx)
                    for (idx h = 0; h < H; ++h)
                        for (idx w2 = 0; w2 < W; ++w2)
                            out.at4(n, c, h * k + dy, w2 * k + dx) = vx.at4(n, c * k * k + dy * k + dx, h, w2);
    return t.push(std::move(out), t.needs_grad(x), [x, k, N, C, H, W](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gx(Shape{N, C * k * k, H, W});
        for (idx n = 0; n < N; ++n)
            for (idx c = 0; c < C; ++c)
                for (idx dy = 0; dy < k; ++dy)
                    for (idx dx = 0; dx < k; ++dx)
                        for (idx h = 0; h < H; ++h)
                            for (idx w2 = 0; w2 < W; ++w2)
                                gx.at4(n, c * k * k + dy * k + dx, h, w2) = g.at4(n, c, h * k + dy, w2 * k + dx);
        tp.accumulate(x, gx);
    });
}

// exact inverse of pixel_shuffle
template <typename T>
Var<T> pixel_unshuffle(Tape<T>& t, Var<T> x, idx k) {
    const Tensor<T>& vx = t.val(x);
    if (vx.ndim() != 4) throw std::invalid_argument("pixel_unshuffle: want [N,C,H,W]");
    const idx N = vx.shape[0], C = vx.shape[1], Hk = vx.shape[2], Wk = vx.shape[3];
    if (k < 1 || Hk % k != 0 || Wk % k != 0)
        throw std::invalid_argument("pixel_unshuffle: spatial dims not divisible by k");
    const idx H = Hk / k, W = Wk / k;
    Tensor<T> out(Shape{N, C * k * k, H, W});
    for (idx n = 0; n < N; ++n)
        for (idx c = 0; c < C; ++c)
            for (idx dy = 0; dy < k; ++dy)
                for (idx dx = 0; dx < k; ++dx)
                    for (idx h = 0; h < H; ++h)
                        for (idx w2 = 0; w2 < W; ++w2)
                            out.at4(n, c * k * k + dy * k + dx, h, w2) = vx.at4(n, c, h * k + dy, w2 * k + dx);
    return t.push(std::move(out), t.needs_grad(x), [x, k, N, C, H, W](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gx(Shape{N, C, H * k, W * k});
        for (idx n = 0; n < N; ++n)
            for (idx c = 0; c < C; ++c)
                for (idx dy = 0; dy < k; ++dy)
                    for (idx dx = 0; dx < k; ++dx)
                        for (idx h = 0; h < H; ++h)
                            for (idx w2 = 0; w2 < W; ++w2)
                                gx.at4(n, c, h * k + dy, w2 * k + dx) = g.at4(n, c * k * k + dy * k + dx, h, w2);
        tp.accumulate(x, gx);
    });
}

// non-overlapping k x k average pooling; spatial dims must divide by k
template <typename T>
Var<T> avg_pool2d(Tape<T>& t, Var<T> x, idx k) {
    const Tensor<T>& vx = t.val(x);
    if (vx.ndim() != 4) throw std::invalid_argument("avg_pool2d: want [N,C,H,W]");
    const idx N = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    if (k < 1 || H % k != 0 || W % k != 0) throw std::invalid_argument("avg_pool2d: spatial dims not divisible by k");
    const idx ho = H / k, wo = W / k;
    const T inv = T(1) / static_cast<T>(k * k);
    Tensor<T> out(Shape{N, C, ho, wo});
    for (idx n = 0; n < N; ++n)
        for (idx c = 0; c < C; ++c)
            for (idx oy = 0; oy < ho; ++oy)
                for (idx ox = 0; ox < wo; ++ox) {
                    T s = T(0);
                    for (idx dy = 0; dy < k; ++dy)
                        for (idx dx = 0; dx < k; ++dx) s += vx.at4(n, c, oy * k + dy, ox * k + dx);
                    out.at4(n, c, oy, ox) = s * inv;
                }
    return t.push(std::move(out), t.needs_grad(x), [x, k, N, C, ho, wo, inv](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gx(tp.val(x).shape);
        for (idx n = 0; n < N; ++n)
            for (idx c = 0; c < C; ++c)
                for (idx oy = 0; oy < ho; ++oy)
                    for (idx ox = 0; ox < wo; ++ox) {
                        const T gv = g.at4(n, c, oy, ox) * inv;
                        for (idx dy = 0; dy < k; ++dy)
                            for (idx dx = 0; dx < k; ++dx) gx.at4(n, c, oy * k + dy, ox * k + dx) += gv;
                    }
        tp.accumulate(x, gx);
    });
}

// [N,C,H,W] -> [N,C] spatial mean
template <typename T>
Var<T> global_avg_pool(Tape<T>& t, Var<T> x) {
    const Tensor<T>& vx = t.val(x);
    if (vx.ndim() != 4) throw std::invalid_argument("global_avg_pool: want [N,C,H,W]");
    const idx N = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    const T inv = T(1) / static_cast<T>(H * W);
    Tensor<T> out(Shape{N, C});
    for (idx n = 0; n < N; ++n)
        for (idx c = 0; c < C; ++c) {
            T s = T(0);
            for (idx h = 0; h < H; ++h)
                for (idx w2 = 0; w2 < W; ++w2) s += vx.at4(n, c, h, w2);
            out.at2(n, c) = s * inv;
        }
    return t.push(std::move(out), t.needs_grad(x), [x, N, C, H, W, inv](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gx(Shape{N, C, H, W});
        for (idx n = 0; n < N; ++n)
            for (idx c = 0; c < C; ++c) {
                const T gv = g.at2(n, c) * inv;
                for (idx h = 0; h < H; ++h)
                    for (idx w2 = 0; w2 < W; ++w2) gx.at4(n, c, h, w2) = gv;
            }
        tp.accumulate(x, gx);
    });
}

// x2 bilinear upsampling with half-pixel centers (the resize-convolution
// path used by the ablation arms that lack the shuffle upscaler)
template <typename T>
Var<T> bilinear_up2(Tape<T>& t, Var<T> x) {
    const Tensor<T>& vx = t.val(x);
    if (vx.ndim() != 4) throw std::invalid_argument("bilinear_up2: want [N,C,H,W]");
    const idx N = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    const idx Ho = 2 * H, Wo = 2 * W;
    // precompute the 1-d interpolation taps (shared across rows/cols)
    auto taps = [](idx o, idx limit, idx& i0, idx& i1, T& w1) {
        const double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
        double fl = std::floor(src);
        i0 = static_cast<idx>(fl);
        i1 = i0 + 1;
        w1 = static_cast<T>(src - fl);
        if (i0 < 0) { i0 = 0; }
        if (i1 > limit - 1) { i1 = limit - 1; }
    };
    Tensor<T> out(Shape{N, C, Ho, Wo});
    for (idx n = 0; n < N; ++n)
        for (idx c = 0; c < C; ++c)
            for (idx oy = 0; oy < Ho; ++oy) {
                idx y0, y1; T wy;
                taps(oy, H, y0, y1, wy);
                for (idx ox = 0; ox < Wo; ++ox) {
                    idx x0, x1; T wx;
                    taps(ox, W, x0, x1, wx);
                    out.at4(n, c, oy, ox) =
                        (T(1) - wy) * ((T(1) - wx) * vx.at4(n, c, y0, x0) + wx * vx.at4(n, c, y0, x1)) +
                        wy * ((T(1) - wx) * vx.at4(n, c, y1, x0) + wx * vx.at4(n, c, y1, x1));
                }
            }
    return t.push(std::move(out), t.needs_grad(x), [x, taps, N, C, H, W, Ho, Wo](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gx(Shape{N, C, H, W});
        for (idx n = 0; n < N; ++n)
            for (idx c = 0; c < C; ++c)
                for (idx oy = 0; oy < Ho; ++oy) {
                    idx y0, y1; T wy;
                    taps(oy, H, y0, y1, wy);
                    for (idx ox = 0; ox < Wo; ++ox) {
                        idx x0, x1; T wx;
                        taps(ox, W, x0, x1, wx);
                        const T gv = g.at4(n, c, oy, ox);
                        gx.at4(n, c, y0, x0) += (T(1) - wy) * (T(1) - wx) * gv;
                        gx.at4(n, c, y0, x1) += (T(1) - wy) * wx * gv;
                        gx.at4(n, c, y1, x0) += wy * (T(1) - wx) * gv;
                        gx.at4(n, c, y1, x1) += wy * wx * gv;
                    }
                }
        tp.accumulate(x, gx);
    });
}

} // namespace legan::ad
