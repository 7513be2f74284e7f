// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rr/nn/tensor.hpp"

namespace rr::nn {

/// Thread-local switch for graph recording. Inference code wraps itself in a
/// NoGradGuard so intermediate nodes do not keep their parents alive.
class GradMode {
public:
    static bool enabled() { return flag(); }
    static void set(bool on) { flag() = on; }

private:
    static bool& flag() {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;

    Tensor<T>& grad_buffer() {
        if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
        return grad;
    }
};

/// Handle to a node of the reverse-mode tape. Copies share the node.
template <typename T>
class Var {
public:
    Var() = default;

    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    /// Records an op result. Parents and the backward closure are kept only if
    /// grad mode is on and at least one parent needs a gradient.
    static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> backward) {
        Var out(std::move(value));
        if (!GradMode::enabled()) return out;
        bool needs = false;
        for (const auto& p : parents) needs = needs || (p.node_ && p.node_->requires_grad);
        if (!needs) return out;
        out.node_->requires_grad = true;
        out.node_->parents.reserve(parents.size());
        for (auto& p : parents) out.node_->parents.push_back(p.node_);
        out.node_->backward = std::move(backward);
        return out;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    int dim(int i) const { return node_->value.dim(i); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    const Tensor<T>& grad() const { return node_->grad_buffer(); }
    Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() {
        if (node_->grad.size()) node_->grad.fill(T(0));
    }

    T item() const {
        require(size() == 1, "item() on tensor of shape ", shape_str(shape()));
        return node_->value[0];
    }

    Node<T>* node() const { return node_.get(); }

    /// Runs reverse accumulation from this (scalar) node.
    void backward() const {
        require(size() == 1, "backward() needs a scalar, got ", shape_str(shape()));
        if (!node_->requires_grad) return;
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, i] = stack.back();
            if (i < n->parents.size()) {
                Node<T>* p = n->parents[i++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->grad_buffer().fill(T(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backward) {
                n->grad_buffer();
                n->backward(*n);
            }
        }
    }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Gradient buffer of parent `i`, or nullptr when it does not need one.
template <typename T>
inline Tensor<T>* parent_grad(Node<T>& n, std::size_t i) {
    auto& p = n.parents[i];
    return p->requires_grad ? &p->grad_buffer() : nullptr;
}

}  // namespace rr::nn
