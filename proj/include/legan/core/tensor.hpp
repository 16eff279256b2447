#pragma once

// Dense row-major n-d tensor. Deliberately minimal: contiguous storage,
// shape vector, element access. Everything heavier (GEMM, convolution)
// lives in ops.hpp and maps views onto this storage.

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace legan {

using idx = std::int64_t;
using Shape = std::vector<idx>;

inline idx shape_numel(const Shape& s) {
    idx n = 1;
    for (idx d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, T fill) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<idx>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("tensor: data size does not match shape " + shape_str(shape));
    }

    idx numel() const { return static_cast<idx>(data.size()); }
    idx ndim() const { return static_cast<idx>(shape.size()); }
    idx dim(idx i) const { return shape[static_cast<size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](idx i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](idx i) const { return data[static_cast<size_t>(i)]; }

    // 2-d / 3-d / 4-d accessors; no bounds checks in release builds by design.
    T& at2(idx i, idx j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    const T& at2(idx i, idx j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    T& at3(idx i, idx j, idx k) { return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)]; }
    const T& at3(idx i, idx j, idx k) const { return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)]; }
    T& at4(idx n, idx c, idx h, idx w) {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    const T& at4(idx n, idx c, idx h, idx w) const {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("reshape: element count mismatch " + shape_str(shape) + " -> " + shape_str(s));
        Tensor out;
        out.shape = std::move(s);
        out.data = data;
        return out;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

} // namespace legan
