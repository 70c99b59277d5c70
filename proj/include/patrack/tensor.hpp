#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "patrack/errors.hpp"

namespace patrack {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
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
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until gradient is accumulated
    bool requires_grad = false;
};

/// Dense row-major tensor. Copying a Tensor copies the handle, not the
/// storage; tensors are treated as immutable once produced except for
/// gradient accumulation into leaf parameters.
template <typename T>
class Tensor {
  public:
    using Scalar = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape) {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->data.assign(static_cast<size_t>(shape_numel(shape)), T(0));
        impl->shape = std::move(shape);
        return Tensor(impl);
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        for (T& v : t.data()) v = value;
        return t;
    }

    static Tensor scalar(T value) { return full({}, value); }

    static Tensor from(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
            throw ConfigError("tensor data size " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape));
        }
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = std::move(shape);
        impl->data = std::move(values);
        return Tensor(impl);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
    int64_t dim(int64_t i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::vector<T>& data() { return impl_->data; }
    const std::vector<T>& data() const { return impl_->data; }

    T item() const {
        if (numel() != 1) throw ConfigError("item() requires a single-element tensor, got " + shape_str(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<T>& grad() { return impl_->grad; }
    const std::vector<T>& grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    /// Detached value copy (no grad, no graph link).
    Tensor clone_detached() const {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = impl_->shape;
        impl->data = impl_->data;
        return Tensor(impl);
    }

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

  private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}

/// RAII guard disabling operation recording (inference / finite differences).
class NoGradGuard {
  public:
    NoGradGuard() : prev_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
    ~NoGradGuard() { detail::grad_mode_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

inline bool grad_mode() { return detail::grad_mode_enabled; }

/// Ordered record of executed operations. Nodes are appended in execution
/// order, which is a topological order by construction; backward walks the
/// record once in reverse. One tape per thread.
template <typename T>
class GradTape {
  public:
    struct Node {
        std::shared_ptr<TensorImpl<T>> output;
        // Reads output->grad, accumulates into input grads.
        std::function<void(const std::vector<T>&)> backward;
    };

    static GradTape& active() {
        static thread_local GradTape tape;
        return tape;
    }

    void record(Node node) { nodes_.push_back(std::move(node)); }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    void run_backward(const Tensor<T>& loss) {
        if (loss.numel() != 1) {
            throw ConfigError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
        }
        loss.impl()->grad.assign(1, T(1));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!it->output->grad.empty()) it->backward(it->output->grad);
        }
        clear();
    }

  private:
    std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
void accumulate_grad(const std::shared_ptr<TensorImpl<T>>& impl, const std::vector<T>& delta) {
    if (!impl->requires_grad) return;
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
    for (size_t i = 0; i < delta.size(); ++i) impl->grad[i] += delta[i];
}

template <typename T>
void check_finite(const Tensor<T>& t) {
#ifndef NDEBUG
    for (T v : t.data()) {
        if (std::isnan(static_cast<double>(v))) {
            throw NumericError("NaN produced by tensor operation");
        }
    }
#else
    (void)t;
#endif
}

// Marks the output as grad-carrying and records the node when grad mode is
// on and at least one input participates in differentiation.
template <typename T, typename Fn>
void record_op(const std::vector<Tensor<T>>& inputs, Tensor<T>& out, Fn&& backward) {
    check_finite(out);
    if (!grad_mode()) return;
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.defined() && in.requires_grad()) {
            needs = true;
            break;
        }
    }
    if (!needs) return;
    out.set_requires_grad(true);
    typename GradTape<T>::Node node;
    node.output = out.impl();
    node.backward = std::forward<Fn>(backward);
    GradTape<T>::active().record(std::move(node));
}

}  // namespace detail

/// Backpropagate from a scalar loss through every recorded operation; leaf
/// gradients accumulate additively and the tape is cleared afterwards.
template <typename T>
void backward(const Tensor<T>& loss) {
    GradTape<T>::active().run_backward(loss);
}

}  // namespace patrack
