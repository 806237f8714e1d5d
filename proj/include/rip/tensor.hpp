#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "rip/rng.hpp"

namespace rip {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

// One node of the define-by-run graph. `parents` are the op inputs in
// execution order; `backward_fn` accumulates this node's grad into them.
struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool backward_ran = false;

    std::size_t size() const { return data.size(); }
    bool needs_grad() const { return requires_grad || static_cast<bool>(backward_fn); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

bool grad_mode();

}  // namespace detail

// RAII switch that disables graph recording (inference / finite differences).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense row-major tensor participating in reverse-mode differentiation.
// Value-semantics handle: copies share the underlying node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = true);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::size_t size() const { return impl_->data.size(); }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    double value() const;  // scalar tensors only
    double at(std::initializer_list<std::size_t> idx) const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        impl_->requires_grad = b;
        return *this;
    }
    bool needs_grad() const { return impl_->needs_grad(); }

    // Grad buffer of a leaf (or any node after backward). Allocates on demand.
    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad_values() const { return impl_->grad; }
    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    }

    // Reverse pass from a scalar loss. Visits each reachable node once, in
    // reverse execution order. Calling twice on the same node throws.
    void backward() const;

    std::shared_ptr<detail::Node> impl() const { return impl_; }

private:
    std::shared_ptr<detail::Node> impl_;
};

// --- elementwise / structural ops ------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor square(const Tensor& a);

// x[..., C] + bias[C], broadcast over rows
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

// a[..., k] * b[k, n] -> [..., n]; leading dims of a are treated as rows
Tensor matmul(const Tensor& a, const Tensor& b);

// columns [c0, c1) of the last dimension
Tensor col_slice(const Tensor& x, std::size_t c0, std::size_t c1);

// concatenate along the last dimension (equal leading dims)
Tensor concat_cols(const std::vector<Tensor>& xs);

Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);

// y = sum_i w[i] * xs[i], w a rank-1 tensor of length xs.size()
Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w);

namespace detail {

// op-construction helpers shared by the op implementations
Tensor op_result(Shape shape, std::vector<double> data);
void op_record(Tensor& out, const std::vector<Tensor>& parents, std::function<void(Node&)> fn);

}  // namespace detail

}  // namespace rip
