#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape records every operation as a node holding the forward value and a
// closure that scatters the node's gradient into its parents. Nodes are
// appended in execution order, so walking the tape backwards is already a
// topological order and backward() is a single reverse sweep.
//
// The engine is templated on the scalar type: training instantiates float,
// the finite-difference gradient checks instantiate double.

#include <functional>
#include <memory>
#include <stdexcept>

#include "legan/core/tensor.hpp"

namespace legan {

template <typename T>
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Var leaf(Tensor<T> value, bool needs_grad = true) { return push(std::move(value), needs_grad, nullptr); }
    Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

    const Tensor<T>& val(Var v) const { return nodes_[check(v)].value; }
    Tensor<T>& val_mut(Var v) { return nodes_[check(v)].value; }

    const Tensor<T>& grad(Var v) const {
        const Node& n = nodes_[check(v)];
        if (!n.grad_ready) throw std::logic_error("tape: gradient not computed for this node");
        return n.grad;
    }

    bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }

    // Accumulate into a parent's gradient during the backward sweep.
    void accumulate(Var v, const Tensor<T>& g) {
        Node& n = nodes_[check(v)];
        if (!n.needs_grad) return;
        ensure_grad(n);
        check_same_shape(n.grad, g, "tape accumulate");
        T* dst = n.grad.ptr();
        const T* src = g.ptr();
        const idx m = g.numel();
        for (idx i = 0; i < m; ++i) dst[i] += src[i];
    }

    // Run the reverse sweep from a scalar root.
    void backward(Var root) {
        Node& r = nodes_[check(root)];
        if (r.value.numel() != 1) throw std::invalid_argument("tape backward: root must be scalar");
        for (auto& n : nodes_) {
            n.grad_ready = false;
            n.grad.data.clear();
            n.grad.shape.clear();
        }
        ensure_grad(r);
        r.grad[0] = T(1);
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && n.needs_grad && n.grad_ready) n.back(*this, n.grad);
        }
    }

    size_t size() const { return nodes_.size(); }

    // --- used by op implementations ---
    using BackFn = std::function<void(Tape&, const Tensor<T>&)>;

    Var push(Tensor<T> value, bool needs_grad, BackFn back) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool grad_ready = false;
        bool needs_grad = false;
        BackFn back;
    };

    size_t check(Var v) const {
        if (v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::out_of_range("tape: invalid var handle");
        return static_cast<size_t>(v.id);
    }

    void ensure_grad(Node& n) {
        if (!n.grad_ready) {
            n.grad = Tensor<T>(n.value.shape);
            n.grad_ready = true;
        }
    }

    std::vector<Node> nodes_;
};

template <typename T>
using Var = typename Tape<T>::Var;

} // namespace legan
