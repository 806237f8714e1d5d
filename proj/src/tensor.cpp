#include "rip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rip/error.hpp"
#include "rip/gemm.hpp"

namespace rip {

namespace {

// Graph buffers are tens of MB per batch and freed every step; keeping them
// in the arena instead of mmap avoids page-fault churn.
struct MallocTuning {
    MallocTuning() {
#if defined(__GLIBC__)
        mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    }
};
const MallocTuning g_malloc_tuning;

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_mode = true;
}

bool grad_mode() { return g_grad_mode; }

void set_grad_mode(bool b) { g_grad_mode = b; }

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::grad_mode()) { detail::set_grad_mode(false); }
NoGradGuard::~NoGradGuard() { detail::set_grad_mode(prev_); }

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    impl_ = std::make_shared<detail::Node>();
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    impl_ = std::make_shared<detail::Node>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

double Tensor::value() const {
    if (size() != 1) throw ShapeError("value() requires a scalar tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank()) throw ShapeError("index rank mismatch");
    std::size_t flat = 0;
    std::size_t i = 0;
    for (auto v : idx) {
        flat = flat * impl_->shape[i] + v;
        ++i;
    }
    return impl_->data[flat];
}

void Tensor::backward() const {
    if (size() != 1) {
        throw ShapeError("backward() requires a scalar loss, got " + shape_str(shape()));
    }
    detail::Node* root = impl_.get();
    if (root->backward_ran) {
        throw Error("backward() called twice on the same graph without reset");
    }
    root->backward_ran = true;

    // iterative post-order DFS over parent edges; reversed gives topo order
    std::vector<detail::Node*> topo;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->backward_fn && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::Node* node = *it;
        if (!node->backward_fn) continue;
        node->ensure_grad();
        node->backward_fn(*node);
    }
}

// --- op helpers --------------------------------------------------------------

namespace detail {

Tensor op_result(Shape shape, std::vector<double> data) {
    return Tensor(std::move(shape), std::move(data));
}

// Attach parents + backward closure if recording is on and any input needs it.
void op_record(Tensor& out, const std::vector<Tensor>& parents,
               std::function<void(Node&)> backward_fn) {
    if (!grad_mode()) return;
    bool any = false;
    for (const auto& p : parents) any = any || p.needs_grad();
    if (!any) return;
    auto impl = out.impl();
    impl->parents.clear();
    for (const auto& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
}

}  // namespace detail

namespace {

using detail::Node;

Tensor make_result(Shape shape, std::vector<double> data) {
    return detail::op_result(std::move(shape), std::move(data));
}

void record(Tensor& out, std::initializer_list<Tensor> parents,
            std::function<void(Node&)> backward_fn) {
    detail::op_record(out, std::vector<Tensor>(parents), std::move(backward_fn));
}

void record_vec(Tensor& out, const std::vector<Tensor>& parents,
                std::function<void(Node&)> backward_fn) {
    detail::op_record(out, parents, std::move(backward_fn));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double s = 1.0) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace

// --- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    Tensor c = make_result(a.shape(), std::move(out));
    Node* an = a.impl().get();
    Node* bn = b.impl().get();
    const bool na = an->needs_grad(), nb = bn->needs_grad();
    record(c, {a, b}, [an, bn, na, nb](Node& self) {
        if (na) {
            an->ensure_grad();
            axpy(an->grad, self.grad);
        }
        if (nb) {
            bn->ensure_grad();
            axpy(bn->grad, self.grad);
        }
    });
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
    Tensor c = make_result(a.shape(), std::move(out));
    Node* an = a.impl().get();
    Node* bn = b.impl().get();
    const bool na = an->needs_grad(), nb = bn->needs_grad();
    record(c, {a, b}, [an, bn, na, nb](Node& self) {
        if (na) {
            an->ensure_grad();
            axpy(an->grad, self.grad);
        }
        if (nb) {
            bn->ensure_grad();
            axpy(bn->grad, self.grad, -1.0);
        }
    });
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
    Tensor c = make_result(a.shape(), std::move(out));
    Node* an = a.impl().get();
    Node* bn = b.impl().get();
    const bool na = an->needs_grad(), nb = bn->needs_grad();
    record(c, {a, b}, [an, bn, na, nb](Node& self) {
        if (na) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (nb) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->data[i];
        }
    });
    return c;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    const double* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * pa[i];
    Tensor c = make_result(a.shape(), std::move(out));
    Node* an = a.impl().get();
    record(c, {a}, [an, s](Node& self) {
        an->ensure_grad();
        axpy(an->grad, self.grad, s);
    });
    return c;
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
        throw ShapeError("add_rowwise: last dim of " + shape_str(x.shape()) +
                         " must equal bias " + shape_str(bias.shape()));
    }
    const std::size_t c = bias.dim(0);
    const std::size_t rows = x.size() / c;
    std::vector<double> out(x.size());
    const double* px = x.data();
    const double* pb = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px + r * c;
        double* yr = out.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) yr[j] = xr[j] + pb[j];
    }
    Tensor y = make_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    Node* bn = bias.impl().get();
    const bool nx = xn->needs_grad(), nb = bn->needs_grad();
    record(y, {x, bias}, [xn, bn, nx, nb, rows, c](Node& self) {
        if (nx) {
            xn->ensure_grad();
            axpy(xn->grad, self.grad);
        }
        if (nb) {
            bn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = self.grad.data() + r * c;
                for (std::size_t j = 0; j < c; ++j) bn->grad[j] += gr[j];
            }
        }
    });
    return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t k = b.dim(0);
    const std::size_t n = b.dim(1);
    const std::size_t m = a.size() / k;
    std::vector<double> out(m * n);
    gemm_nn(a.data(), b.data(), out.data(), m, k, n);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    Tensor c = make_result(std::move(out_shape), std::move(out));
    Node* an = a.impl().get();
    Node* bn = b.impl().get();
    const bool na = an->needs_grad(), nb = bn->needs_grad();
    record(c, {a, b}, [an, bn, na, nb, m, k, n](Node& self) {
        if (na) {
            an->ensure_grad();
            gemm_nt_acc(self.grad.data(), bn->data.data(), an->grad.data(), m, n, k);
        }
        if (nb) {
            bn->ensure_grad();
            gemm_tn_acc(an->data.data(), self.grad.data(), bn->grad.data(), m, k, n);
        }
    });
    return c;
}

Tensor col_slice(const Tensor& x, std::size_t c0, std::size_t c1) {
    const std::size_t c = x.shape().back();
    if (c0 >= c1 || c1 > c) throw ShapeError("col_slice: bad range on " + shape_str(x.shape()));
    const std::size_t w = c1 - c0;
    const std::size_t rows = x.size() / c;
    std::vector<double> out(rows * w);
    const double* px = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px + r * c + c0;
        double* yr = out.data() + r * w;
        for (std::size_t j = 0; j < w; ++j) yr[j] = xr[j];
    }
    Shape shape = x.shape();
    shape.back() = w;
    Tensor y = make_result(std::move(shape), std::move(out));
    Node* xn = x.impl().get();
    record(y, {x}, [xn, rows, c, c0, w](Node& self) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = self.grad.data() + r * w;
            double* xg = xn->grad.data() + r * c + c0;
            for (std::size_t j = 0; j < w; ++j) xg[j] += gr[j];
        }
    });
    return y;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input");
    Shape lead = xs[0].shape();
    lead.pop_back();
    std::size_t total = 0;
    for (const auto& x : xs) {
        Shape l = x.shape();
        std::size_t w = l.back();
        l.pop_back();
        if (l != lead) {
            throw ShapeError("concat_cols: leading dims differ: " + shape_str(xs[0].shape()) +
                             " vs " + shape_str(x.shape()));
        }
        total += w;
    }
    std::size_t rows = 1;
    for (auto d : lead) rows *= d;
    std::vector<double> out(rows * total);
    std::size_t off = 0;
    for (const auto& x : xs) {
        const std::size_t w = x.shape().back();
        const double* px = x.data();
        for (std::size_t r = 0; r < rows; ++r) {
            double* yr = out.data() + r * total + off;
            const double* xr = px + r * w;
            for (std::size_t j = 0; j < w; ++j) yr[j] = xr[j];
        }
        off += w;
    }
    Shape shape = lead;
    shape.push_back(total);
    Tensor y = make_result(std::move(shape), std::move(out));
    std::vector<std::size_t> widths;
    for (const auto& x : xs) widths.push_back(x.shape().back());
    std::vector<Node*> nodes;
    for (const auto& x : xs) nodes.push_back(x.impl().get());
    record_vec(y, xs, [nodes, widths, rows, total](Node& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < nodes.size(); ++p) {
            const std::size_t w = widths[p];
            if (nodes[p]->needs_grad()) {
                nodes[p]->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = self.grad.data() + r * total + off;
                    double* xg = nodes[p]->grad.data() + r * w;
                    for (std::size_t j = 0; j < w; ++j) xg[j] += gr[j];
                }
            }
            off += w;
        }
    });
    return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    }
    Tensor y = make_result(std::move(shape), x.values());
    Node* xn = x.impl().get();
    record(y, {x}, [xn](Node& self) {
        xn->ensure_grad();
        axpy(xn->grad, self.grad);
    });
    return y;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor y = Tensor::scalar(acc);
    Node* xn = x.impl().get();
    record(y, {x}, [xn](Node& self) {
        xn->ensure_grad();
        const double g = self.grad[0];
        for (auto& v : xn->grad) v += g;
    });
    return y;
}

Tensor mean_all(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w) {
    if (xs.empty() || w.rank() != 1 || w.dim(0) != xs.size()) {
        throw ShapeError("weighted_sum: need one weight per input");
    }
    for (const auto& x : xs) check_same_shape(xs[0], x, "weighted_sum");
    std::vector<double> out(xs[0].size(), 0.0);
    for (std::size_t p = 0; p < xs.size(); ++p) {
        const double wp = w.data()[p];
        const double* px = xs[p].data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += wp * px[i];
    }
    Tensor y = make_result(xs[0].shape(), std::move(out));
    std::vector<Tensor> parents = xs;
    parents.push_back(w);
    std::vector<Node*> nodes;
    for (const auto& x : xs) nodes.push_back(x.impl().get());
    Node* wn = w.impl().get();
    record_vec(y, parents, [nodes, wn](Node& self) {
        for (std::size_t p = 0; p < nodes.size(); ++p) {
            const double wp = wn->data[p];
            if (nodes[p]->needs_grad()) {
                nodes[p]->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    nodes[p]->grad[i] += wp * self.grad[i];
            }
        }
        if (wn->needs_grad()) {
            wn->ensure_grad();
            for (std::size_t p = 0; p < nodes.size(); ++p) {
                double acc = 0.0;
                const double* px = nodes[p]->data.data();
                for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px[i];
                wn->grad[p] += acc;
            }
        }
    });
    return y;
}

}  // namespace rip
