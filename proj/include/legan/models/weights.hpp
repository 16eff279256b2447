// Ordered, named parameter storage shared by all three networks, plus the
// helpers that lift stored tensors onto an autodiff tape.
#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "legan/core/rng.hpp"
#include "legan/core/tape.hpp"
#include "legan/core/tensor.hpp"

namespace legan {

struct NamedTensor {
    std::string name;
    Tensor<float> value;
    bool trainable = true; // optimizer updates this tensor
    bool buffer = false;   // running statistic: read/written by forward passes, never by the optimizer
};

class ParamStore {
public:
    std::vector<NamedTensor> items;

    void add(std::string name, Tensor<float> value, bool trainable, bool buffer = false) {
        if (index_.count(name)) throw std::logic_error("param store: duplicate tensor name " + name);
        index_[name] = items.size();
        items.push_back(NamedTensor{std::move(name), std::move(value), trainable && !buffer, buffer});
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor<float>& at(const std::string& name) const { return items[find(name)].value; }
    Tensor<float>& at(const std::string& name) { return items[find(name)].value; }

    idx trainable_count() const {
        idx n = 0;
        for (const auto& t : items)
            if (t.trainable) n += t.value.numel();
        return n;
    }

    bool all_finite() const {
        for (const auto& t : items)
            for (float v : t.value.data)
                if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::unordered_map<std::string, size_t> index_;

    size_t find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("param store: no tensor named " + name);
        return it->second;
    }
};

namespace init {

// zero-mean Gaussian with sigma = sqrt(2 / fan_in)
inline Tensor<float> fan_in_gaussian(const Shape& shape, idx fan_in, Rng& rng) {
    Tensor<float> t(shape);
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<float>(rng.normal(0.0, sigma));
    return t;
}

inline void add_conv(ParamStore& s, const std::string& prefix, idx out_c, idx in_c, idx kh, idx kw, Rng& rng) {
    s.add(prefix + ".w", fan_in_gaussian({out_c, in_c, kh, kw}, in_c * kh * kw, rng), true);
    s.add(prefix + ".b", Tensor<float>({out_c}, 0.0f), true);
}

inline void add_dense(ParamStore& s, const std::string& prefix, idx out_w, idx in_w, Rng& rng) {
    s.add(prefix + ".w", fan_in_gaussian({out_w, in_w}, in_w, rng), true);
    s.add(prefix + ".b", Tensor<float>({out_w}, 0.0f), true);
}

inline void add_batchnorm(ParamStore& s, const std::string& prefix, idx channels) {
    s.add(prefix + ".gamma", Tensor<float>({channels}, 1.0f), true);
    s.add(prefix + ".beta", Tensor<float>({channels}, 0.0f), true);
    s.add(prefix + ".running_mean", Tensor<float>({channels}, 0.0f), false, true);
    s.add(prefix + ".running_var", Tensor<float>({channels}, 1.0f), false, true);
}

} // namespace init

// A parameter store lifted onto a tape. Trainable tensors become leaves (with
// gradients when requested), frozen tensors become constants, and buffers are
// exposed as raw tensors so batch-norm can update running statistics in place.
template <typename T>
struct BoundParams {
    std::unordered_map<std::string, Var<T>> vars;
    std::unordered_map<std::string, Tensor<T>*> stats;
    std::vector<Var<T>> by_index; // parallel to store items; invalid for buffers

    Var<T> var(const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end()) throw std::out_of_range("bound params: no var named " + name);
        return it->second;
    }
    Tensor<T>* stat(const std::string& name) const {
        auto it = stats.find(name);
        if (it == stats.end()) throw std::out_of_range("bound params: no buffer named " + name);
        return it->second;
    }

    std::vector<std::unique_ptr<Tensor<T>>> owned_stats; // buffer copies when not bound in place
};

// Read-only binding: buffers are copied, so the store is never mutated.
template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore& store, bool with_grad) {
    BoundParams<T> b;
    b.by_index.resize(store.items.size());
    for (size_t i = 0; i < store.items.size(); ++i) {
        const auto& item = store.items[i];
        if (item.buffer) {
            b.owned_stats.push_back(std::make_unique<Tensor<T>>(item.value.template cast<T>()));
            b.stats[item.name] = b.owned_stats.back().get();
            continue;
        }
        Var<T> v = item.trainable ? tape.leaf(item.value.template cast<T>(), with_grad)
                                      : tape.constant(item.value.template cast<T>());
        b.vars[item.name] = v;
        b.by_index[i] = v;
    }
    return b;
}

// In-place binding for training: buffers point straight into the store, so a
// train-mode forward updates the stored running statistics.
inline BoundParams<float> bind_params_mut(Tape<float>& tape, ParamStore& store) {
    BoundParams<float> b;
    b.by_index.resize(store.items.size());
    for (size_t i = 0; i < store.items.size(); ++i) {
        auto& item = store.items[i];
        if (item.buffer) {
            b.stats[item.name] = &item.value;
            continue;
        }
        Var<float> v = item.trainable ? tape.leaf(item.value, true) : tape.constant(item.value);
        b.vars[item.name] = v;
        b.by_index[i] = v;
    }
    return b;
}

} // namespace legan
