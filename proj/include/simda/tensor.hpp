#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "simda/error.hpp"
#include "simda/rng.hpp"

namespace simda {

// Dense N-dimensional array with an optional gradient accumulator.
// Scalar type S is float for normal compute and double for gradient checks.
template <typename S>
struct TensorNode {
    std::vector<int> shape;
    std::vector<S> data;
    std::vector<S> grad; // empty until touched by backward
    bool requires_grad = false;
};

template <typename S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape, bool requires_grad = false) {
        node = std::make_shared<TensorNode<S>>();
        node->shape = std::move(shape);
        node->data.assign(count(node->shape), S(0));
        node->requires_grad = requires_grad;
    }

    static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

    static TensorT full(std::vector<int> shape, S value) {
        TensorT t(std::move(shape));
        for (auto& v : t.node->data) v = value;
        return t;
    }

    static TensorT from(std::vector<int> shape, std::vector<S> values) {
        TensorT t;
        t.node = std::make_shared<TensorNode<S>>();
        if (count(shape) != values.size())
            throw ShapeError("tensor data length does not match shape");
        t.node->shape = std::move(shape);
        t.node->data = std::move(values);
        return t;
    }

    static TensorT scalar(S value) { return from({1}, {value}); }

    static TensorT randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                         bool requires_grad = false) {
        TensorT t(std::move(shape), requires_grad);
        for (auto& v : t.node->data) v = static_cast<S>(rng.normal() * stddev);
        return t;
    }

    bool defined() const { return static_cast<bool>(node); }

    const std::vector<int>& shape() const { return node->shape; }
    int ndim() const { return static_cast<int>(node->shape.size()); }
    int dim(int i) const { return node->shape[static_cast<std::size_t>(i)]; }
    int numel() const { return static_cast<int>(node->data.size()); }

    S* data() { return node->data.data(); }
    const S* data() const { return node->data.data(); }
    S& operator[](int i) { return node->data[static_cast<std::size_t>(i)]; }
    S operator[](int i) const { return node->data[static_cast<std::size_t>(i)]; }

    S item() const {
        if (numel() != 1) throw UsageError("item() requires a single-element tensor");
        return node->data[0];
    }

    bool requires_grad() const { return node->requires_grad; }
    void set_requires_grad(bool r) { node->requires_grad = r; }

    void ensure_grad() {
        if (node->grad.empty()) node->grad.assign(node->data.size(), S(0));
    }
    bool has_grad() const { return !node->grad.empty(); }
    S* grad() { return node->grad.data(); }
    const S* grad() const { return node->grad.data(); }
    void zero_grad() { node->grad.clear(); }

    // Deep copy of the data; gradient state is not carried over.
    TensorT clone() const {
        TensorT t;
        t.node = std::make_shared<TensorNode<S>>();
        t.node->shape = node->shape;
        t.node->data = node->data;
        t.node->requires_grad = node->requires_grad;
        return t;
    }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int e : shape) {
            if (e <= 0) throw ShapeError("tensor extents must be positive");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    std::shared_ptr<TensorNode<S>> node;
};

// Ordered record of executed differentiable ops. Constructing a tape makes it
// the active recorder for the current thread; destruction restores the
// previous one, so nesting follows scope. backward() replays the record once,
// in reverse execution order.
template <typename S>
class GradTapeT {
public:
    GradTapeT() {
        prev_ = tls_active();
        tls_active() = this;
    }
    ~GradTapeT() { tls_active() = prev_; }
    GradTapeT(const GradTapeT&) = delete;
    GradTapeT& operator=(const GradTapeT&) = delete;

    static GradTapeT* active() { return tls_active(); }

    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    std::size_t op_count() const { return ops_.size(); }

    void backward(TensorT<S>& loss) {
        if (loss.numel() != 1) throw UsageError("backward requires a scalar loss");
        loss.ensure_grad();
        loss.grad()[0] += S(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    static GradTapeT*& tls_active() {
        thread_local GradTapeT* active = nullptr;
        return active;
    }

    std::vector<std::function<void()>> ops_;
    GradTapeT* prev_ = nullptr;
};

using Tensor = TensorT<float>;
using GradTape = GradTapeT<float>;

namespace detail {

// True when this op must be recorded on the active tape.
template <typename S>
inline bool taping(bool any_input_requires_grad) {
    return any_input_requires_grad && GradTapeT<S>::active() != nullptr;
}

template <typename S>
inline void record(std::function<void()> fn) {
    GradTapeT<S>::active()->record(std::move(fn));
}

} // namespace detail

} // namespace simda
