#pragma once

// Differentiable primitive operations on the tape: elementwise arithmetic,
// activations, 2-d row/column reductions and the matrix product. Network
// layers (convolution, batch norm, shuffling) are in nn_ops.hpp.

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "legan/core/tape.hpp"

namespace legan::ad {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

// ---- elementwise binary ----

template <typename T>
Var<T> add(Tape<T>& t, Var<T> a, Var<T> b) {
    const Tensor<T>&va = t.val(a), &vb = t.val(b);
    check_same_shape(va, vb, "add");
    Tensor<T> out = va;
    for (idx i = 0; i < out.numel(); ++i) out[i] += vb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.push(std::move(out), ng, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

template <typename T>
Var<T> sub(Tape<T>& t, Var<T> a, Var<T> b) {
    const Tensor<T>&va = t.val(a), &vb = t.val(b);
    check_same_shape(va, vb, "sub");
    Tensor<T> out = va;
    for (idx i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.push(std::move(out), ng, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, g);
        if (!tp.needs_grad(b)) return;
        Tensor<T> gb = g;
        for (idx i = 0; i < gb.numel(); ++i) gb[i] = -gb[i];
        tp.accumulate(b, gb);
    });
}

template <typename T>
Var<T> mul(Tape<T>& t, Var<T> a, Var<T> b) {
    const Tensor<T>&va = t.val(a), &vb = t.val(b);
    check_same_shape(va, vb, "mul");
    Tensor<T> out = va;
    for (idx i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.push(std::move(out), ng, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.needs_grad(a)) {
            Tensor<T> ga = g;
            const Tensor<T>& vb2 = tp.val(b);
            for (idx i = 0; i < ga.numel(); ++i) ga[i] *= vb2[i];
            tp.accumulate(a, ga);
        }
        if (tp.needs_grad(b)) {
            Tensor<T> gb = g;
            const Tensor<T>& va2 = tp.val(a);
            for (idx i = 0; i < gb.numel(); ++i) gb[i] *= va2[i];
            tp.accumulate(b, gb);
        }
    });
}

// ---- elementwise unary ----

template <typename T, typename FwdFn, typename BackMul>
Var<T> unary(Tape<T>& t, Var<T> a, FwdFn f, BackMul dmul) {
    const Tensor<T>& va = t.val(a);
    Tensor<T> out = va;
    for (idx i = 0; i < out.numel(); ++i) out[i] = f(va[i]);
    return t.push(std::move(out), t.needs_grad(a), [a, dmul](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.needs_grad(a)) return;
        const Tensor<T>& x = tp.val(a);
        Tensor<T> ga = g;
        for (idx i = 0; i < ga.numel(); ++i) ga[i] *= dmul(x[i]);
        tp.accumulate(a, ga);
    });
}

template <typename T>
Var<T> neg(Tape<T>& t, Var<T> a) {
    return unary(t, a, [](T x) { return -x; }, [](T) { return T(-1); });
}

template <typename T>
Var<T> scale(Tape<T>& t, Var<T> a, T c) {
    return unary(t, a, [c](T x) { return c * x; }, [c](T) { return c; });
}

template <typename T>
Var<T> add_scalar(Tape<T>& t, Var<T> a, T c) {
    return unary(t, a, [c](T x) { return x + c; }, [](T) { return T(1); });
}

template <typename T>
Var<T> relu(Tape<T>& t, Var<T> a) {
    return unary(t, a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Tape<T>& t, Var<T> a) {
    return unary(
        t, a,
        [](T x) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
        [](T x) {
            const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
            return s * (T(1) - s);
        });
}

template <typename T>
Var<T> exp_(Tape<T>& t, Var<T> a) {
    return unary(t, a, [](T x) { return std::exp(x); }, [](T x) { return std::exp(x); });
}

template <typename T>
Var<T> log_(Tape<T>& t, Var<T> a) {
    return unary(t, a, [](T x) { return std::log(x); }, [](T x) { return T(1) / x; });
}

// derivative clamped at 0 so an exactly-zero argument does not emit inf
template <typename T>
Var<T> sqrt_(Tape<T>& t, Var<T> a) {
    return unary(t, a, [](T x) { return std::sqrt(x); },
                 [](T x) { return x > T(0) ? T(1) / (T(2) * std::sqrt(x)) : T(0); });
}

template <typename T>
Var<T> recip(Tape<T>& t, Var<T> a) {
    return unary(t, a, [](T x) { return T(1) / x; }, [](T x) { return T(-1) / (x * x); });
}

// log(sigmoid(x)) computed in a numerically safe form
template <typename T>
Var<T> log_sigmoid(Tape<T>& t, Var<T> a) {
    return unary(
        t, a,
        [](T x) { return x >= T(0) ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
        [](T x) { return x >= T(0) ? std::exp(-x) / (T(1) + std::exp(-x)) : T(1) / (T(1) + std::exp(x)); });
}

// ---- reshape (copies; desk-scale tensors are small) ----

template <typename T>
Var<T> reshape(Tape<T>& t, Var<T> a, Shape s) {
    Tensor<T> out = t.val(a).reshaped(std::move(s));
    Shape orig = t.val(a).shape;
    return t.push(std::move(out), t.needs_grad(a), [a, orig](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, g.reshaped(orig));
    });
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(Tape<T>& t, Var<T> a) {
    const Tensor<T>& va = t.val(a);
    T s = T(0);
    for (idx i = 0; i < va.numel(); ++i) s += va[i];
    Tensor<T> out(Shape{1});
    out[0] = s;
    return t.push(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> ga(tp.val(a).shape, g[0]);
        tp.accumulate(a, ga);
    });
}

template <typename T>
Var<T> mean_all(Tape<T>& t, Var<T> a) {
    const idx n = t.val(a).numel();
    return scale(t, sum_all(t, a), T(1) / static_cast<T>(n));
}

// rows of a 2-d tensor summed away: [m,n] -> [m]
template <typename T>
Var<T> row_sum(Tape<T>& t, Var<T> a) {
    const Tensor<T>& va = t.val(a);
    if (va.ndim() != 2) throw std::invalid_argument("row_sum: want 2-d tensor");
    const idx m = va.shape[0], n = va.shape[1];
    Tensor<T> out(Shape{m});
    for (idx i = 0; i < m; ++i) {
        T s = T(0);
        for (idx j = 0; j < n; ++j) s += va.at2(i, j);
        out[i] = s;
    }
    return t.push(std::move(out), t.needs_grad(a), [a, m, n](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> ga(Shape{m, n});
        for (idx i = 0; i < m; ++i)
            for (idx j = 0; j < n; ++j) ga.at2(i, j) = g[i];
        tp.accumulate(a, ga);
    });
}

template <typename T>
Var<T> col_sum(Tape<T>& t, Var<T> a) {
    const Tensor<T>& va = t.val(a);
    if (va.ndim() != 2) throw std::invalid_argument("col_sum: want 2-d tensor");
    const idx m = va.shape[0], n = va.shape[1];
    Tensor<T> out(Shape{n});
    for (idx i = 0; i < m; ++i)
        for (idx j = 0; j < n; ++j) out[j] += va.at2(i, j);
    return t.push(std::move(out), t.needs_grad(a), [a, m, n](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> ga(Shape{m, n});
        for (idx i = 0; i < m; ++i)
            for (idx j = 0; j < n; ++j) ga.at2(i, j) = g[j];
        tp.accumulate(a, ga);
    });
}

namespace detail {
template <typename T, bool Max, bool OverCols>
Var<T> extremum(Tape<T>& t, Var<T> a) {
    const Tensor<T>& va = t.val(a);
    if (va.ndim() != 2) throw std::invalid_argument("extremum: want 2-d tensor");
    const idx m = va.shape[0], n = va.shape[1];
    const idx outer = OverCols ? m : n; // reduce over cols -> one per row, etc.
    const idx inner = OverCols ? n : m;
    Tensor<T> out(Shape{outer});
    auto args = std::make_shared<std::vector<idx>>(static_cast<size_t>(outer));
    for (idx i = 0; i < outer; ++i) {
        idx best = 0;
        T bv = OverCols ? va.at2(i, 0) : va.at2(0, i);
        for (idx j = 1; j < inner; ++j) {
            const T v = OverCols ? va.at2(i, j) : va.at2(j, i);
            if (Max ? (v > bv) : (v < bv)) {
                bv = v;
                best = j;
            }
        }
        out[i] = bv;
        (*args)[static_cast<size_t>(i)] = best;
    }
    return t.push(std::move(out), t.needs_grad(a), [a, m, n, args](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> ga(Shape{m, n});
        for (idx i = 0; i < g.numel(); ++i) {
            const idx j = (*args)[static_cast<size_t>(i)];
            if (OverCols)
                ga.at2(i, j) += g[i];
            else
                ga.at2(j, i) += g[i];
        }
        tp.accumulate(a, ga);
    });
}
} // namespace detail

// [m,n] -> [m], minimum over the columns of each row (ties: first index)
template <typename T>
Var<T> row_min(Tape<T>& t, Var<T> a) { return detail::extremum<T, false, true>(t, a); }
template <typename T>
Var<T> row_max(Tape<T>& t, Var<T> a) { return detail::extremum<T, true, true>(t, a); }
// [m,n] -> [n], maximum over the rows of each column
template <typename T>
Var<T> col_max(Tape<T>& t, Var<T> a) { return detail::extremum<T, true, false>(t, a); }

// ---- broadcast helpers on 2-d tensors ----

// M[i,j] * v[i]
template <typename T>
Var<T> scale_rows(Tape<T>& t, Var<T> a, Var<T> v) {
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vv = t.val(v);
    if (va.ndim() != 2 || vv.ndim() != 1 || vv.shape[0] != va.shape[0])
        throw std::invalid_argument("scale_rows: want [m,n] and [m]");
    const idx m = va.shape[0], n = va.shape[1];
    Tensor<T> out(Shape{m, n});
    for (idx i = 0; i < m; ++i)
        for (idx j = 0; j < n; ++j) out.at2(i, j) = va.at2(i, j) * vv[i];
    const bool ng = t.needs_grad(a) || t.needs_grad(v);
    return t.push(std::move(out), ng, [a, v, m, n](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.needs_grad(a)) {
            const Tensor<T>& vv2 = tp.val(v);
            Tensor<T> ga(Shape{m, n});
            for (idx i = 0; i < m; ++i)
                for (idx j = 0; j < n; ++j) ga.at2(i, j) = g.at2(i, j) * vv2[i];
            tp.accumulate(a, ga);
        }
        if (tp.needs_grad(v)) {
            const Tensor<T>& va2 = tp.val(a);
            Tensor<T> gv(Shape{m});
            for (idx i = 0; i < m; ++i) {
                T s = T(0);
                for (idx j = 0; j < n; ++j) s += g.at2(i, j) * va2.at2(i, j);
                gv[i] = s;
            }
            tp.accumulate(v, gv);
        }
    });
}

// M[i,j] * v[j]
template <typename T>
Var<T> scale_cols(Tape<T>& t, Var<T> a, Var<T> v) {
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vv = t.val(v);
    if (va.ndim() != 2 || vv.ndim() != 1 || vv.shape[0] != va.shape[1])
        throw std::invalid_argument("scale_cols: want [m,n] and [n]");
    const idx m = va.shape[0], n = va.shape[1];
    Tensor<T> out(Shape{m, n});
    for (idx i = 0; i < m; ++i)
        for (idx j = 0; j < n; ++j) out.at2(i, j) = va.at2(i, j) * vv[j];
    const bool ng = t.needs_grad(a) || t.needs_grad(v);
    return t.push(std::move(out), ng, [a, v, m, n](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.needs_grad(a)) {
            const Tensor<T>& vv2 = tp.val(v);
            Tensor<T> ga(Shape{m, n});
            for (idx i = 0; i < m; ++i)
                for (idx j = 0; j < n; ++j) ga.at2(i, j) = g.at2(i, j) * vv2[j];
            tp.accumulate(a, ga);
        }
        if (tp.needs_grad(v)) {
            const Tensor<T>& va2 = tp.val(a);
            Tensor<T> gv(Shape{n});
            for (idx j = 0; j < n; ++j) {
                T s = T(0);
                for (idx i = 0; i < m; ++i) s += g.at2(i, j) * va2.at2(i, j);
                gv[j] = s;
            }
            tp.accumulate(v, gv);
        }
    });
}

// row-wise stabilized softmax of a 2-d tensor
template <typename T>
Var<T> row_softmax(Tape<T>& t, Var<T> a) {
    const Tensor<T>& va = t.val(a);
    if (va.ndim() != 2) throw std::invalid_argument("row_softmax: want 2-d tensor");
    const idx m = va.shape[0], n = va.shape[1];
    Tensor<T> out(Shape{m, n});
    for (idx i = 0; i < m; ++i) {
        T mx = va.at2(i, 0);
        for (idx j = 1; j < n; ++j) mx = std::max(mx, va.at2(i, j));
        T z = T(0);
        for (idx j = 0; j < n; ++j) {
            const T e = std::exp(va.at2(i, j) - mx);
            out.at2(i, j) = e;
            z += e;
        }
        for (idx j = 0; j < n; ++j) out.at2(i, j) /= z;
    }
    auto self = std::make_shared<Tensor<T>>(out);
    return t.push(std::move(out), t.needs_grad(a), [a, self, m, n](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> ga(Shape{m, n});
        for (idx i = 0; i < m; ++i) {
            T dot = T(0);
            for (idx j = 0; j < n; ++j) dot += g.at2(i, j) * self->at2(i, j);
            for (idx j = 0; j < n; ++j) ga.at2(i, j) = self->at2(i, j) * (g.at2(i, j) - dot);
        }
        tp.accumulate(a, ga);
    });
}

// ---- matrix product ----

template <typename T>
Var<T> matmul(Tape<T>& t, Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false) {
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(b);
    if (va.ndim() != 2 || vb.ndim() != 2) throw std::invalid_argument("matmul: want 2-d tensors");
    const idx am = trans_a ? va.shape[1] : va.shape[0];
    const idx ak = trans_a ? va.shape[0] : va.shape[1];
    const idx bk = trans_b ? vb.shape[1] : vb.shape[0];
    const idx bn = trans_b ? vb.shape[0] : vb.shape[1];
    if (ak != bk)
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
    Tensor<T> out(Shape{am, bn});
    {
        ECMap<T> A(va.ptr(), va.shape[0], va.shape[1]);
        ECMap<T> B(vb.ptr(), vb.shape[0], vb.shape[1]);
        EMap<T> C(out.ptr(), am, bn);
        if (!trans_a && !trans_b) C.noalias() = A * B;
        else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
        else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.push(std::move(out), ng, [a, b, trans_a, trans_b](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& va2 = tp.val(a);
        const Tensor<T>& vb2 = tp.val(b);
        ECMap<T> A(va2.ptr(), va2.shape[0], va2.shape[1]);
        ECMap<T> B(vb2.ptr(), vb2.shape[0], vb2.shape[1]);
        ECMap<T> G(g.ptr(), g.shape[0], g.shape[1]);
        if (tp.needs_grad(a)) {
            Tensor<T> ga(va2.shape);
            EMap<T> GA(ga.ptr(), va2.shape[0], va2.shape[1]);
            if (!trans_a && !trans_b) GA.noalias() = G * B.transpose();
            else if (!trans_a && trans_b) GA.noalias() = G * B;
            else if (trans_a && !trans_b) GA.noalias() = B * G.transpose();
            else GA.noalias() = B.transpose() * G.transpose();
            tp.accumulate(a, ga);
        }
        if (tp.needs_grad(b)) {
            Tensor<T> gb(vb2.shape);
            EMap<T> GB(gb.ptr(), vb2.shape[0], vb2.shape[1]);
            if (!trans_a && !trans_b) GB.noalias() = A.transpose() * G;
            else if (!trans_a && trans_b) GB.noalias() = G.transpose() * A;
            else if (trans_a && !trans_b) GB.noalias() = A * G;
            else GB.noalias() = G.transpose() * A.transpose();
            tp.accumulate(b, gb);
        }
    });
}

// extract sample n of a batched tensor: [N, d1, d2, ...] -> [d1, d2, ...]
template <typename T>
Var<T> select_sample(Tape<T>& t, Var<T> a, idx n) {
    const Tensor<T>& va = t.val(a);
    if (va.ndim() < 2) throw std::invalid_argument("select_sample: want a batched tensor");
    if (n < 0 || n >= va.shape[0]) throw std::invalid_argument("select_sample: index out of range");
    Shape out_shape(va.shape.begin() + 1, va.shape.end());
    const idx stride = shape_numel(out_shape);
    Tensor<T> out(out_shape);
    std::copy(va.ptr() + n * stride, va.ptr() + (n + 1) * stride, out.ptr());
    return t.push(std::move(out), t.needs_grad(a), [a, n, stride](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> ga(tp.val(a).shape);
        std::copy(g.ptr(), g.ptr() + stride, ga.ptr() + n * stride);
        tp.accumulate(a, ga);
    });
}

// [N,F] + bias[F] broadcast over rows
template <typename T>
Var<T> add_bias_rows(Tape<T>& t, Var<T> a, Var<T> bias) {
    const Tensor<T>& va = t.val(a);
    const Tensor<T>& vb = t.val(bias);
    if (va.ndim() != 2 || vb.ndim() != 1 || vb.shape[0] != va.shape[1])
        throw std::invalid_argument("add_bias_rows: want [m,n] and [n]");
    const idx m = va.shape[0], n = va.shape[1];
    Tensor<T> out(Shape{m, n});
    for (idx i = 0; i < m; ++i)
        for (idx j = 0; j < n; ++j) out.at2(i, j) = va.at2(i, j) + vb[j];
    const bool ng = t.needs_grad(a) || t.needs_grad(bias);
    return t.push(std::move(out), ng, [a, bias, m, n](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, g);
        if (!tp.needs_grad(bias)) return;
        Tensor<T> gb(Shape{n});
        for (idx i = 0; i < m; ++i)
            for (idx j = 0; j < n; ++j) gb[j] += g.at2(i, j);
        tp.accumulate(bias, gb);
    });
}

} // namespace legan::ad
