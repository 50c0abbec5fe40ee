#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fpnet/error.hpp"
#include "fpnet/random.hpp"
#include "fpnet/shape.hpp"

namespace fpnet {

// Reverse-mode autodiff over dense tensors. Every op records a closure on its
// output node while grad mode is enabled; backward() replays the closures in
// reverse topological order. Tensors are immutable after the forward pass that
// created them, except for grad buffers and explicitly-mutable state buffers
// (BN running statistics).
namespace autograd {

inline thread_local bool g_grad_enabled = true;
inline std::atomic<bool> g_finite_checks{false};

inline bool enabled() { return g_grad_enabled; }

// Disables tape recording for the current thread (inference / oracles).
class NoGradGuard {
public:
    NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool finite_checks() { return g_finite_checks.load(std::memory_order_relaxed); }
inline void set_finite_checks(bool on) { g_finite_checks.store(on); }

}  // namespace autograd

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_op;  // unset on leaves

    bool is_leaf() const { return parents.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), T(0));
    }
};

}  // namespace detail

template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(const Shape& shape) { return filled(shape, T(0)); }

    static Tensor ones(const Shape& shape) { return filled(shape, T(1)); }

    static Tensor full(const Shape& shape, T value) { return filled(shape, value); }

    static Tensor scalar(T value) { return filled(Shape{1}, value); }

    static Tensor from_data(const Shape& shape, std::vector<T> values) {
        if (static_cast<index_t>(values.size()) != shape.numel()) {
            throw ShapeError("from_data: " + std::to_string(values.size()) +
                             " values for shape " + shape.str());
        }
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = shape;
        t.node_->values = std::move(values);
        return t;
    }

    static Tensor uniform(const Shape& shape, T lo, T hi, Rng& rng) {
        Tensor t = zeros(shape);
        for (T& v : t.node_->values) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor uniform(const Shape& shape, T lo, T hi, std::uint64_t seed) {
        Rng rng(seed);
        return uniform(shape, lo, hi, rng);
    }

    static Tensor normal(const Shape& shape, T mean, T stddev, Rng& rng) {
        Tensor t = zeros(shape);
        for (T& v : t.node_->values) v = static_cast<T>(rng.normal(mean, stddev));
        return t;
    }

    static Tensor normal(const Shape& shape, T mean, T stddev, std::uint64_t seed) {
        Rng rng(seed);
        return normal(shape, mean, stddev, rng);
    }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return checked()->shape; }

    index_t numel() const { return static_cast<index_t>(checked()->values.size()); }

    std::span<const T> data() const { return checked()->values; }

    // Mutable access; meant for leaves (fills, state buffers, test setup).
    std::span<T> data_mut() { return checked()->values; }

    T item() const {
        if (numel() != 1) {
            throw ContractError("item() on non-scalar tensor of shape " + shape().str());
        }
        return checked()->values[0];
    }

    bool requires_grad() const { return checked()->requires_grad; }

    Tensor& set_requires_grad(bool on) {
        checked()->requires_grad = on;
        return *this;
    }

    std::span<const T> grad() const { return checked()->grad; }

    std::span<T> grad_mut() { return checked()->grad; }

    void ensure_grad() { checked()->ensure_grad(); }

    void zero_grad() {
        auto* n = checked();
        if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), T(0));
    }

    detail::Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

    // Assembles an op result. Records parents and the backward closure only
    // when grad mode is on and some input requires grad; otherwise the result
    // is a constant leaf.
    static Tensor make_result(Shape shape, std::vector<T> values,
                              std::initializer_list<Tensor> inputs,
                              std::function<void(detail::Node<T>&)> backward_op) {
        Tensor out = from_data(std::move(shape), std::move(values));
        if (autograd::finite_checks()) {
            for (T v : out.node_->values) {
                if (!std::isfinite(static_cast<double>(v))) {
                    throw NumericError("non-finite value produced by op (shape " +
                                       out.shape().str() + ")");
                }
            }
        }
        bool needs = false;
        if (autograd::enabled()) {
            for (const Tensor& in : inputs) {
                if (in.defined() && in.requires_grad()) {
                    needs = true;
                    break;
                }
            }
        }
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->backward_op = std::move(backward_op);
            for (const Tensor& in : inputs) {
                if (in.defined() && in.requires_grad()) {
                    out.node_->parents.push_back(in.node_ptr());
                }
            }
        }
        return out;
    }

private:
    static Tensor filled(const Shape& shape, T value) {
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = shape;
        t.node_->values.assign(static_cast<std::size_t>(shape.numel()), value);
        return t;
    }

    detail::Node<T>* checked() const {
        if (!node_) throw ContractError("operation on an undefined tensor");
        return node_.get();
    }

    std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    // Iterative post-order DFS; second stack entry marks "children done".
    std::vector<std::pair<Node<T>*, bool>> stack{{root, false}};
    while (!stack.empty()) {
        auto [node, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order.push_back(node);
            continue;
        }
        if (!visited.insert(node).second) continue;
        stack.push_back({node, true});
        for (const auto& p : node->parents) {
            if (!visited.count(p.get())) stack.push_back({p.get(), false});
        }
    }
    return order;  // parents before children; reverse for backprop
}

}  // namespace detail

// Populates grad buffers of every reachable grad-requiring leaf with
// d(loss)/d(leaf). Leaf grads accumulate across calls; interior grads are
// scratch and reset on every call.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw ContractError("backward on an undefined tensor");
    if (loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            loss.shape().str());
    }
    detail::Node<T>* root = loss.node();
    if (!root->requires_grad) {
        std::fprintf(stderr,
                     "fpnet: warning: backward on a tensor with no recorded graph; "
                     "no gradients were produced\n");
        return;
    }
    auto order = detail::topo_order(root);
    for (auto* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->values.size(), T(0));
    }
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_op) (*it)->backward_op(**it);
    }
}

// Same, but also guarantees that every listed leaf ends up with an allocated
// grad buffer and warns once about leaves the loss graph never reached.
template <typename T>
void backward(const Tensor<T>& loss, std::span<Tensor<T>* const> leaves) {
    backward(loss);
    for (Tensor<T>* leaf : leaves) {
        if (!leaf->defined() || !leaf->requires_grad()) continue;
        if (leaf->grad().empty()) {
            std::fprintf(stderr,
                         "fpnet: warning: leaf of shape %s is disconnected from the "
                         "loss; its gradient is zero\n",
                         leaf->shape().str().c_str());
            leaf->ensure_grad();
        }
    }
}

}  // namespace fpnet
