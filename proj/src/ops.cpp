#include "rip/ops.hpp"

#include <algorithm>
#include <cmath>

#include "rip/error.hpp"
#include "rip/gemm.hpp"
#include "rip/parallel.hpp"

namespace rip {

namespace {

using detail::Node;
using detail::op_record;
using detail::op_result;

inline double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_lengths(const std::vector<int>& lengths, std::size_t batch, std::size_t t_max,
                   const char* op) {
    if (lengths.size() != batch) throw ShapeError(std::string(op) + ": one length per sample");
    for (int l : lengths) {
        if (l < 1 || static_cast<std::size_t>(l) > t_max) {
            throw ShapeError(std::string(op) + ": valid length " + std::to_string(l) +
                             " outside [1, " + std::to_string(t_max) + "]");
        }
    }
}

}  // namespace

// --- activations -------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigm(px[i]);
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn](Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.data[i];
            xn->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
    return y;
}

Tensor tanh_op(const Tensor& x) {
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(px[i]);
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn](Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double t = self.data[i];
            xn->grad[i] += self.grad[i] * (1.0 - t * t);
        }
    });
    return y;
}

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * sigm(px[i]);
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn](Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = sigm(xn->data[i]);
            xn->grad[i] += self.grad[i] * (s + xn->data[i] * s * (1.0 - s));
        }
    });
    return y;
}

Tensor softplus(const Tensor& x) {
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = px[i];
        out[i] = v > 30.0 ? v : (v < -30.0 ? std::exp(v) : std::log1p(std::exp(v)));
    }
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn](Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * sigm(xn->data[i]);
    });
    return y;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] >= 0.0 ? px[i] : slope * px[i];
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn, slope](Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * (xn->data[i] >= 0.0 ? 1.0 : slope);
    });
    return y;
}

// --- row ops -----------------------------------------------------------------

Tensor softmax(const Tensor& x) {
    const std::size_t k = x.shape().back();
    const std::size_t rows = x.size() / k;
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px + r * k;
        double* yr = out.data() + r * k;
        double m = xr[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, xr[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            yr[j] = std::exp(xr[j] - m);
            denom += yr[j];
        }
        for (std::size_t j = 0; j < k; ++j) yr[j] /= denom;
    }
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn, rows, k](Node& self) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = self.data.data() + r * k;
            const double* gr = self.grad.data() + r * k;
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += gr[j] * yr[j];
            double* xg = xn->grad.data() + r * k;
            for (std::size_t j = 0; j < k; ++j) xg[j] += yr[j] * (gr[j] - dot);
        }
    });
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t d = x.shape().back();
    if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != d || beta.dim(0) != d) {
        throw ShapeError("layer_norm: gamma/beta must be [D] with D = " + std::to_string(d));
    }
    const std::size_t rows = x.size() / d;
    std::vector<double> out(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    auto means = std::make_shared<std::vector<double>>(rows);
    const double* px = x.data();
    const double* pg = gamma.data();
    const double* pb = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*means)[r] = mean;
        (*inv_std)[r] = is;
        double* yr = out.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = pg[j] * ((xr[j] - mean) * is) + pb[j];
    }
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    Node* gn = gamma.impl().get();
    Node* bn = beta.impl().get();
    const bool nx = xn->needs_grad(), ng = gn->needs_grad(), nb = bn->needs_grad();
    op_record(y, {x, gamma, beta}, [xn, gn, bn, nx, ng, nb, rows, d, means, inv_std](Node& self) {
        if (nx) xn->ensure_grad();
        if (ng) gn->ensure_grad();
        if (nb) bn->ensure_grad();
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xn->data.data() + r * d;
            const double* gr = self.grad.data() + r * d;
            const double mean = (*means)[r];
            const double is = (*inv_std)[r];
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double xhat = (xr[j] - mean) * is;
                const double dx = gr[j] * gn->data[j];
                dxhat[j] = dx;
                sum_dxhat += dx;
                sum_dxhat_xhat += dx * xhat;
                if (ng) gn->grad[j] += gr[j] * xhat;
                if (nb) bn->grad[j] += gr[j];
            }
            if (nx) {
                const double inv_d = 1.0 / static_cast<double>(d);
                double* xg = xn->grad.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) {
                    const double xhat = (xr[j] - mean) * is;
                    xg[j] += is * (dxhat[j] - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
                }
            }
        }
    });
    return y;
}

// --- sequence ops --------------------------------------------------------------

Tensor masked_mean_pool(const Tensor& x, const std::vector<int>& lengths) {
    if (x.rank() != 3) throw ShapeError("masked_mean_pool: expected [B,T,D], got " + shape_str(x.shape()));
    const std::size_t b = x.dim(0), t_max = x.dim(1), d = x.dim(2);
    check_lengths(lengths, b, t_max, "masked_mean_pool");
    std::vector<double> out(b * d, 0.0);
    const double* px = x.data();
    for (std::size_t s = 0; s < b; ++s) {
        const std::size_t len = static_cast<std::size_t>(lengths[s]);
        double* yr = out.data() + s * d;
        for (std::size_t t = 0; t < len; ++t) {
            const double* xr = px + (s * t_max + t) * d;
            for (std::size_t j = 0; j < d; ++j) yr[j] += xr[j];
        }
        const double inv = 1.0 / static_cast<double>(len);
        for (std::size_t j = 0; j < d; ++j) yr[j] *= inv;
    }
    Tensor y = op_result(Shape{b, d}, std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn, b, t_max, d, lengths](Node& self) {
        xn->ensure_grad();
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t len = static_cast<std::size_t>(lengths[s]);
            const double inv = 1.0 / static_cast<double>(len);
            const double* gr = self.grad.data() + s * d;
            for (std::size_t t = 0; t < len; ++t) {
                double* xg = xn->grad.data() + (s * t_max + t) * d;
                for (std::size_t j = 0; j < d; ++j) xg[j] += gr[j] * inv;
            }
        }
    });
    return y;
}

Tensor masked_mean_pool(const Tensor& x, int valid_len) {
    if (x.rank() != 2) throw ShapeError("masked_mean_pool: expected [T,D], got " + shape_str(x.shape()));
    Tensor batched = reshape(x, Shape{1, x.dim(0), x.dim(1)});
    Tensor pooled = masked_mean_pool(batched, std::vector<int>{valid_len});
    return reshape(pooled, Shape{x.dim(1)});
}

namespace {

Tensor depthwise_causal_conv_impl(const Tensor& x, const Tensor& w, const Tensor& bias,
                                  std::size_t b, std::size_t t_max, std::size_t c) {
    if (w.rank() != 2 || w.dim(0) < 1) throw ShapeError("causal_conv1d: weight must be [K,C]");
    if (w.dim(1) != c || bias.rank() != 1 || bias.dim(0) != c) {
        throw ShapeError("causal_conv1d: channel mismatch: x has " + std::to_string(c) +
                         " channels, weight " + shape_str(w.shape()) + ", bias " +
                         shape_str(bias.shape()));
    }
    const std::size_t k = w.dim(0);
    std::vector<double> out(b * t_max * c);
    const double* px = x.data();
    const double* pw = w.data();
    const double* pb = bias.data();
    auto body = [&](std::size_t s0, std::size_t s1) {
        for (std::size_t s = s0; s < s1; ++s) {
            const double* xs = px + s * t_max * c;
            double* ys = out.data() + s * t_max * c;
            for (std::size_t t = 0; t < t_max; ++t) {
                double* yr = ys + t * c;
                for (std::size_t j = 0; j < c; ++j) yr[j] = pb[j];
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + kk + 1) -
                                               static_cast<std::ptrdiff_t>(k);
                    if (src < 0) continue;
                    const double* xr = xs + static_cast<std::size_t>(src) * c;
                    const double* wr = pw + kk * c;
                    for (std::size_t j = 0; j < c; ++j) yr[j] += wr[j] * xr[j];
                }
            }
        }
    };
    if (b > 1) parallel_for(b, body); else body(0, b);
    Shape shape = x.shape();
    Tensor y = op_result(std::move(shape), std::move(out));
    Node* xn = x.impl().get();
    Node* wn = w.impl().get();
    Node* bn = bias.impl().get();
    const bool nx = xn->needs_grad(), nw = wn->needs_grad(), nb = bn->needs_grad();
    op_record(y, {x, w, bias}, [xn, wn, bn, nx, nw, nb, b, t_max, c, k](Node& self) {
        if (nx) xn->ensure_grad();
        if (nw) wn->ensure_grad();
        if (nb) bn->ensure_grad();
        for (std::size_t s = 0; s < b; ++s) {
            const double* gs = self.grad.data() + s * t_max * c;
            const double* xs = xn->data.data() + s * t_max * c;
            for (std::size_t t = 0; t < t_max; ++t) {
                const double* gr = gs + t * c;
                if (nb) {
                    for (std::size_t j = 0; j < c; ++j) bn->grad[j] += gr[j];
                }
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + kk + 1) -
                                               static_cast<std::ptrdiff_t>(k);
                    if (src < 0) continue;
                    const std::size_t u = static_cast<std::size_t>(src);
                    if (nx) {
                        double* xg = xn->grad.data() + (s * t_max + u) * c;
                        const double* wr = wn->data.data() + kk * c;
                        for (std::size_t j = 0; j < c; ++j) xg[j] += gr[j] * wr[j];
                    }
                    if (nw) {
                        double* wg = wn->grad.data() + kk * c;
                        const double* xr = xs + u * c;
                        for (std::size_t j = 0; j < c; ++j) wg[j] += gr[j] * xr[j];
                    }
                }
            }
        }
    });
    return y;
}

}  // namespace

Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2) throw ShapeError("causal_conv1d: expected [T,C], got " + shape_str(x.shape()));
    Tensor batched = reshape(x, Shape{1, x.dim(0), x.dim(1)});
    Tensor y = depthwise_causal_conv_impl(batched, w, bias, 1, x.dim(0), x.dim(1));
    return reshape(y, x.shape());
}

Tensor causal_conv1d_batched(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 3) throw ShapeError("causal_conv1d: expected [B,T,C], got " + shape_str(x.shape()));
    return depthwise_causal_conv_impl(x, w, bias, x.dim(0), x.dim(1), x.dim(2));
}

Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 3) throw ShapeError("conv1d_causal: expected [B,T,Cin], got " + shape_str(x.shape()));
    if (w.rank() != 3 || w.dim(1) != x.dim(2)) {
        throw ShapeError("conv1d_causal: weight " + shape_str(w.shape()) +
                         " incompatible with input " + shape_str(x.shape()));
    }
    const std::size_t b = x.dim(0), t_max = x.dim(1), cin = x.dim(2);
    const std::size_t k = w.dim(0), cout = w.dim(2);
    if (bias.rank() != 1 || bias.dim(0) != cout) throw ShapeError("conv1d_causal: bias must be [Cout]");
    std::vector<double> out(b * t_max * cout);
    const double* pb = bias.data();
    for (std::size_t r = 0; r < b * t_max; ++r) {
        double* yr = out.data() + r * cout;
        for (std::size_t j = 0; j < cout; ++j) yr[j] = pb[j];
    }
    // y[s, t, :] += x[s, t-K+1+kk, :] * w[kk]; contiguous t-blocks per (s, kk)
    for (std::size_t s = 0; s < b; ++s) {
        const double* xs = x.data() + s * t_max * cin;
        double* ys = out.data() + s * t_max * cout;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const std::size_t shift = k - 1 - kk;
            if (shift >= t_max) continue;
            const std::size_t rows = t_max - shift;
            gemm_nn_acc(xs, w.data() + kk * cin * cout, ys + shift * cout, rows, cin, cout);
        }
    }
    Tensor y = op_result(Shape{b, t_max, cout}, std::move(out));
    Node* xn = x.impl().get();
    Node* wn = w.impl().get();
    Node* bn = bias.impl().get();
    const bool nx = xn->needs_grad(), nw = wn->needs_grad(), nb = bn->needs_grad();
    op_record(y, {x, w, bias}, [xn, wn, bn, nx, nw, nb, b, t_max, cin, cout, k](Node& self) {
        if (nb) {
            bn->ensure_grad();
            for (std::size_t r = 0; r < b * t_max; ++r) {
                const double* gr = self.grad.data() + r * cout;
                for (std::size_t j = 0; j < cout; ++j) bn->grad[j] += gr[j];
            }
        }
        if (nx) xn->ensure_grad();
        if (nw) wn->ensure_grad();
        if (!nx && !nw) return;
        std::vector<double> wt;  // w[kk] transposed [Cout,Cin] for dx
        if (nx) wt.resize(cout * cin);
        for (std::size_t s = 0; s < b; ++s) {
            const double* gs = self.grad.data() + s * t_max * cout;
            const double* xs = xn->data.data() + s * t_max * cin;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const std::size_t shift = k - 1 - kk;
                if (shift >= t_max) continue;
                const std::size_t rows = t_max - shift;
                if (nx) {
                    // dx[u] += dy[u+shift] * w[kk]^T
                    gemm_nt_acc(gs + shift * cout, wn->data.data() + kk * cin * cout,
                                xn->grad.data() + s * t_max * cin, rows, cout, cin);
                }
                if (nw) {
                    // dw[kk] += x[0..rows)^T * dy[shift..]
                    gemm_tn_acc(xs, gs + shift * cout, wn->grad.data() + kk * cin * cout, rows,
                                cin, cout);
                }
            }
        }
    });
    return y;
}

Tensor gather_last(const Tensor& x, const std::vector<int>& lengths) {
    if (x.rank() != 3) throw ShapeError("gather_last: expected [B,T,D]");
    const std::size_t b = x.dim(0), t_max = x.dim(1), d = x.dim(2);
    check_lengths(lengths, b, t_max, "gather_last");
    std::vector<double> out(b * d);
    for (std::size_t s = 0; s < b; ++s) {
        const std::size_t t = static_cast<std::size_t>(lengths[s]) - 1;
        const double* xr = x.data() + (s * t_max + t) * d;
        double* yr = out.data() + s * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j];
    }
    Tensor y = op_result(Shape{b, d}, std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn, b, t_max, d, lengths](Node& self) {
        xn->ensure_grad();
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t t = static_cast<std::size_t>(lengths[s]) - 1;
            double* xg = xn->grad.data() + (s * t_max + t) * d;
            const double* gr = self.grad.data() + s * d;
            for (std::size_t j = 0; j < d; ++j) xg[j] += gr[j];
        }
    });
    return y;
}

Tensor gather_first(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("gather_first: expected [B,T,D]");
    const std::size_t b = x.dim(0), t_max = x.dim(1), d = x.dim(2);
    std::vector<double> out(b * d);
    for (std::size_t s = 0; s < b; ++s) {
        const double* xr = x.data() + s * t_max * d;
        double* yr = out.data() + s * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j];
    }
    Tensor y = op_result(Shape{b, d}, std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn, b, t_max, d](Node& self) {
        xn->ensure_grad();
        for (std::size_t s = 0; s < b; ++s) {
            double* xg = xn->grad.data() + s * t_max * d;
            const double* gr = self.grad.data() + s * d;
            for (std::size_t j = 0; j < d; ++j) xg[j] += gr[j];
        }
    });
    return y;
}

// --- loss ----------------------------------------------------------------------

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: expected [B,K] logits");
    const std::size_t b = logits.dim(0), k = logits.dim(1);
    if (targets.size() != b) throw ShapeError("cross_entropy: one target per row");
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= k) {
            throw Error("cross_entropy: invalid target code " + std::to_string(t));
        }
    }
    const double* px = logits.data();
    double total = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const double* xr = px + r * k;
        double m = xr[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, xr[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(xr[j] - m);
        total += m + std::log(denom) - xr[static_cast<std::size_t>(targets[r])];
    }
    Tensor y = Tensor::scalar(total / static_cast<double>(b));
    Node* xn = logits.impl().get();
    op_record(y, {logits}, [xn, b, k, targets](Node& self) {
        xn->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(b);
        for (std::size_t r = 0; r < b; ++r) {
            const double* xr = xn->data.data() + r * k;
            double* xg = xn->grad.data() + r * k;
            double m = xr[0];
            for (std::size_t j = 1; j < k; ++j) m = std::max(m, xr[j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < k; ++j) denom += std::exp(xr[j] - m);
            for (std::size_t j = 0; j < k; ++j) {
                const double p = std::exp(xr[j] - m) / denom;
                xg[j] += g * (p - (static_cast<std::size_t>(targets[r]) == j ? 1.0 : 0.0));
            }
        }
    });
    return y;
}

// --- stochastic / normalization ---------------------------------------------------

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    if (!training || p == 0.0) return x;
    auto mask = std::make_shared<std::vector<double>>(x.size());
    const double keep = 1.0 - p;
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = rng.uniform() >= p ? 1.0 / keep : 0.0;
        (*mask)[i] = m;
        out[i] = px[i] * m;
    }
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    op_record(y, {x}, [xn, mask](Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * (*mask)[i];
    });
    return y;
}

Tensor batch_norm_seq(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const std::vector<int>& lengths, std::vector<double>& running_mean,
                      std::vector<double>& running_var, double momentum, double eps,
                      bool training) {
    if (x.rank() != 3) throw ShapeError("batch_norm_seq: expected [B,T,C]");
    const std::size_t b = x.dim(0), t_max = x.dim(1), c = x.dim(2);
    check_lengths(lengths, b, t_max, "batch_norm_seq");
    if (gamma.dim(0) != c || beta.dim(0) != c || running_mean.size() != c ||
        running_var.size() != c) {
        throw ShapeError("batch_norm_seq: channel mismatch");
    }

    auto mean = std::make_shared<std::vector<double>>(c);
    auto var = std::make_shared<std::vector<double>>(c);
    std::size_t n_valid = 0;
    if (training) {
        for (int l : lengths) n_valid += static_cast<std::size_t>(l);
        for (std::size_t j = 0; j < c; ++j) (*mean)[j] = 0.0;
        const double* px = x.data();
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t len = static_cast<std::size_t>(lengths[s]);
            for (std::size_t t = 0; t < len; ++t) {
                const double* xr = px + (s * t_max + t) * c;
                for (std::size_t j = 0; j < c; ++j) (*mean)[j] += xr[j];
            }
        }
        for (std::size_t j = 0; j < c; ++j) (*mean)[j] /= static_cast<double>(n_valid);
        for (std::size_t j = 0; j < c; ++j) (*var)[j] = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t len = static_cast<std::size_t>(lengths[s]);
            for (std::size_t t = 0; t < len; ++t) {
                const double* xr = px + (s * t_max + t) * c;
                for (std::size_t j = 0; j < c; ++j) {
                    const double d = xr[j] - (*mean)[j];
                    (*var)[j] += d * d;
                }
            }
        }
        for (std::size_t j = 0; j < c; ++j) (*var)[j] /= static_cast<double>(n_valid);
        for (std::size_t j = 0; j < c; ++j) {
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * (*mean)[j];
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * (*var)[j];
        }
    } else {
        *mean = running_mean;
        *var = running_var;
    }

    std::vector<double> out(x.size(), 0.0);  // padded rows stay zero
    std::vector<double> inv_std(c);
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt((*var)[j] + eps);
    const double* px = x.data();
    const double* pg = gamma.data();
    const double* pb = beta.data();
    for (std::size_t s = 0; s < b; ++s) {
        const std::size_t len = static_cast<std::size_t>(lengths[s]);
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t r = s * t_max + t;
            const double* xr = px + r * c;
            double* yr = out.data() + r * c;
            for (std::size_t j = 0; j < c; ++j)
                yr[j] = pg[j] * ((xr[j] - (*mean)[j]) * inv_std[j]) + pb[j];
        }
    }
    Tensor y = op_result(x.shape(), std::move(out));
    Node* xn = x.impl().get();
    Node* gn = gamma.impl().get();
    Node* bn = beta.impl().get();
    const bool nx = xn->needs_grad(), ng = gn->needs_grad(), nb = bn->needs_grad();
    op_record(y, {x, gamma, beta},
              [xn, gn, bn, nx, ng, nb, b, t_max, c, lengths, mean, var, eps, training,
               n_valid](Node& self) {
                  if (nx) xn->ensure_grad();
                  if (ng) gn->ensure_grad();
                  if (nb) bn->ensure_grad();
                  std::vector<double> inv_std(c), sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt((*var)[j] + eps);
                  for (std::size_t s = 0; s < b; ++s) {
                      const std::size_t len = static_cast<std::size_t>(lengths[s]);
                      for (std::size_t t = 0; t < len; ++t) {
                          const std::size_t r = s * t_max + t;
                          const double* gr = self.grad.data() + r * c;
                          const double* xr = xn->data.data() + r * c;
                          for (std::size_t j = 0; j < c; ++j) {
                              const double xhat = (xr[j] - (*mean)[j]) * inv_std[j];
                              sum_dy[j] += gr[j];
                              sum_dy_xhat[j] += gr[j] * xhat;
                          }
                      }
                  }
                  if (ng) {
                      for (std::size_t j = 0; j < c; ++j) gn->grad[j] += sum_dy_xhat[j];
                  }
                  if (nb) {
                      for (std::size_t j = 0; j < c; ++j) bn->grad[j] += sum_dy[j];
                  }
                  if (!nx) return;
                  const double inv_n = training ? 1.0 / static_cast<double>(n_valid) : 0.0;
                  for (std::size_t s = 0; s < b; ++s) {
                      const std::size_t len = static_cast<std::size_t>(lengths[s]);
                      for (std::size_t t = 0; t < len; ++t) {
                          const std::size_t r = s * t_max + t;
                          const double* gr = self.grad.data() + r * c;
                          const double* xr = xn->data.data() + r * c;
                          double* xg = xn->grad.data() + r * c;
                          for (std::size_t j = 0; j < c; ++j) {
                              const double xhat = (xr[j] - (*mean)[j]) * inv_std[j];
                              if (training) {
                                  xg[j] += gn->data[j] * inv_std[j] *
                                           (gr[j] - sum_dy[j] * inv_n - xhat * sum_dy_xhat[j] * inv_n);
                              } else {
                                  xg[j] += gn->data[j] * inv_std[j] * gr[j];
                              }
                          }
                      }
                  }
              });
    return y;
}

// --- recurrent layers -------------------------------------------------------------

Tensor lstm_dir(const Tensor& x, const std::vector<int>& lengths, const LstmDirParams& p,
                bool reverse) {
    if (x.rank() != 3) throw ShapeError("lstm_dir: expected [B,T,C]");
    const std::size_t b = x.dim(0), t_max = x.dim(1), c = x.dim(2);
    check_lengths(lengths, b, t_max, "lstm_dir");
    if (p.wx.rank() != 2 || p.wx.dim(0) != c || p.wx.dim(1) % 4 != 0) {
        throw ShapeError("lstm_dir: wx must be [C,4H]");
    }
    const std::size_t h = p.wx.dim(1) / 4;
    if (p.wh.dim(0) != h || p.wh.dim(1) != 4 * h || p.b.dim(0) != 4 * h) {
        throw ShapeError("lstm_dir: wh/b shape mismatch");
    }

    // per-(sample,time) stored activations for BPTT
    auto act_i = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto act_f = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto act_g = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto act_o = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto cell = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);

    std::vector<double> out(b * t_max * h, 0.0);
    std::vector<double> h_state(b * h, 0.0), c_state(b * h, 0.0);
    std::vector<std::size_t> active;
    std::vector<double> xact, hact, gates;

    auto time_index = [&](std::size_t s, std::size_t sigma) {
        return reverse ? static_cast<std::size_t>(lengths[s]) - 1 - sigma : sigma;
    };

    for (std::size_t sigma = 0; sigma < t_max; ++sigma) {
        active.clear();
        for (std::size_t s = 0; s < b; ++s) {
            if (sigma < static_cast<std::size_t>(lengths[s])) active.push_back(s);
        }
        if (active.empty()) break;
        const std::size_t a = active.size();
        xact.resize(a * c);
        hact.resize(a * h);
        gates.assign(a * 4 * h, 0.0);
        for (std::size_t i = 0; i < a; ++i) {
            const std::size_t s = active[i];
            const std::size_t t = time_index(s, sigma);
            const double* xr = x.data() + (s * t_max + t) * c;
            std::copy(xr, xr + c, xact.begin() + i * c);
            std::copy(h_state.begin() + s * h, h_state.begin() + (s + 1) * h, hact.begin() + i * h);
        }
        gemm_nn(xact.data(), p.wx.data(), gates.data(), a, c, 4 * h);
        gemm_nn_acc(hact.data(), p.wh.data(), gates.data(), a, h, 4 * h);
        for (std::size_t i = 0; i < a; ++i) {
            const std::size_t s = active[i];
            const std::size_t t = time_index(s, sigma);
            double* gr = gates.data() + i * 4 * h;
            const double* pb = p.b.data();
            double* hs = h_state.data() + s * h;
            double* cs = c_state.data() + s * h;
            const std::size_t base = (s * t_max + t) * h;
            for (std::size_t j = 0; j < h; ++j) {
                const double gi = sigm(gr[j] + pb[j]);
                const double gf = sigm(gr[h + j] + pb[h + j]);
                const double gg = std::tanh(gr[2 * h + j] + pb[2 * h + j]);
                const double go = sigm(gr[3 * h + j] + pb[3 * h + j]);
                const double cnew = gf * cs[j] + gi * gg;
                const double hnew = go * std::tanh(cnew);
                (*act_i)[base + j] = gi;
                (*act_f)[base + j] = gf;
                (*act_g)[base + j] = gg;
                (*act_o)[base + j] = go;
                (*cell)[base + j] = cnew;
                cs[j] = cnew;
                hs[j] = hnew;
                out[base + j] = hnew;
            }
        }
    }

    Tensor y = op_result(Shape{b, t_max, h}, std::move(out));
    Node* xn = x.impl().get();
    Node* wxn = p.wx.impl().get();
    Node* whn = p.wh.impl().get();
    Node* bn = p.b.impl().get();
    const bool nx = xn->needs_grad();
    op_record(
        y, {x, p.wx, p.wh, p.b},
        [xn, wxn, whn, bn, nx, b, t_max, c, h, lengths, reverse, act_i, act_f, act_g, act_o,
         cell](Node& self) {
            if (nx) xn->ensure_grad();
            wxn->ensure_grad();
            whn->ensure_grad();
            bn->ensure_grad();
            auto time_index = [&](std::size_t s, std::size_t sigma) {
                return reverse ? static_cast<std::size_t>(lengths[s]) - 1 - sigma : sigma;
            };
            std::vector<double> dh_state(b * h, 0.0), dc_state(b * h, 0.0);
            std::vector<std::size_t> active;
            std::vector<double> dgates, xact, hprev, dxact, dhprev;
            std::size_t sigma_max = 0;
            for (std::size_t s = 0; s < b; ++s)
                sigma_max = std::max(sigma_max, static_cast<std::size_t>(lengths[s]));
            for (std::size_t sig1 = sigma_max; sig1 > 0; --sig1) {
                const std::size_t sigma = sig1 - 1;
                active.clear();
                for (std::size_t s = 0; s < b; ++s) {
                    if (sigma < static_cast<std::size_t>(lengths[s])) active.push_back(s);
                }
                const std::size_t a = active.size();
                dgates.assign(a * 4 * h, 0.0);
                xact.resize(a * c);
                hprev.assign(a * h, 0.0);
                for (std::size_t i = 0; i < a; ++i) {
                    const std::size_t s = active[i];
                    const std::size_t t = time_index(s, sigma);
                    const std::size_t base = (s * t_max + t) * h;
                    const double* xr = xn->data.data() + (s * t_max + t) * c;
                    std::copy(xr, xr + c, xact.begin() + i * c);
                    const bool has_prev = sigma > 0;
                    const std::size_t tprev = has_prev ? time_index(s, sigma - 1) : 0;
                    const std::size_t pbase = (s * t_max + tprev) * h;
                    for (std::size_t j = 0; j < h; ++j) {
                        const double gi = (*act_i)[base + j];
                        const double gf = (*act_f)[base + j];
                        const double gg = (*act_g)[base + j];
                        const double go = (*act_o)[base + j];
                        const double cnew = (*cell)[base + j];
                        const double tc = std::tanh(cnew);
                        const double cprev = has_prev ? (*cell)[pbase + j] : 0.0;
                        if (has_prev) hprev[i * h + j] = self.data[pbase + j];
                        const double dh = self.grad[base + j] + dh_state[s * h + j];
                        const double dgo = dh * tc;
                        double dc = dc_state[s * h + j] + dh * go * (1.0 - tc * tc);
                        const double dgi = dc * gg;
                        const double dgf = dc * cprev;
                        const double dgg = dc * gi;
                        dc_state[s * h + j] = dc * gf;
                        double* dgr = dgates.data() + i * 4 * h;
                        dgr[j] = dgi * gi * (1.0 - gi);
                        dgr[h + j] = dgf * gf * (1.0 - gf);
                        dgr[2 * h + j] = dgg * (1.0 - gg * gg);
                        dgr[3 * h + j] = dgo * go * (1.0 - go);
                    }
                }
                // parameter grads
                gemm_tn_acc(xact.data(), dgates.data(), wxn->grad.data(), a, c, 4 * h);
                gemm_tn_acc(hprev.data(), dgates.data(), whn->grad.data(), a, h, 4 * h);
                for (std::size_t i = 0; i < a; ++i) {
                    const double* dgr = dgates.data() + i * 4 * h;
                    for (std::size_t j = 0; j < 4 * h; ++j) bn->grad[j] += dgr[j];
                }
                // input and recurrent grads
                if (nx) {
                    dxact.assign(a * c, 0.0);
                    gemm_nt_acc(dgates.data(), wxn->data.data(), dxact.data(), a, 4 * h, c);
                    for (std::size_t i = 0; i < a; ++i) {
                        const std::size_t s = active[i];
                        const std::size_t t = time_index(s, sigma);
                        double* xg = xn->grad.data() + (s * t_max + t) * c;
                        for (std::size_t j = 0; j < c; ++j) xg[j] += dxact[i * c + j];
                    }
                }
                dhprev.assign(a * h, 0.0);
                gemm_nt_acc(dgates.data(), whn->data.data(), dhprev.data(), a, 4 * h, h);
                for (std::size_t i = 0; i < a; ++i) {
                    const std::size_t s = active[i];
                    for (std::size_t j = 0; j < h; ++j) dh_state[s * h + j] = dhprev[i * h + j];
                }
            }
        });
    return y;
}

Tensor gru_forward(const Tensor& x, const std::vector<int>& lengths, const GruParams& p) {
    if (x.rank() != 3) throw ShapeError("gru_forward: expected [B,T,C]");
    const std::size_t b = x.dim(0), t_max = x.dim(1), c = x.dim(2);
    check_lengths(lengths, b, t_max, "gru_forward");
    if (p.wx.rank() != 2 || p.wx.dim(0) != c || p.wx.dim(1) % 3 != 0) {
        throw ShapeError("gru_forward: wx must be [C,3H]");
    }
    const std::size_t h = p.wx.dim(1) / 3;
    if (p.wh.dim(0) != h || p.wh.dim(1) != 3 * h || p.bx.dim(0) != 3 * h || p.bh.dim(0) != 3 * h) {
        throw ShapeError("gru_forward: wh/bias shape mismatch");
    }

    auto act_r = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto act_z = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto act_n = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);
    auto act_m = std::make_shared<std::vector<double>>(b * t_max * h, 0.0);  // Uh*h + bh (n gate)

    std::vector<double> out(b * t_max * h, 0.0);
    std::vector<double> h_state(b * h, 0.0);
    std::vector<std::size_t> active;
    std::vector<double> xact, hact, gx, gh;

    for (std::size_t t = 0; t < t_max; ++t) {
        active.clear();
        for (std::size_t s = 0; s < b; ++s) {
            if (t < static_cast<std::size_t>(lengths[s])) active.push_back(s);
        }
        if (active.empty()) break;
        const std::size_t a = active.size();
        xact.resize(a * c);
        hact.resize(a * h);
        gx.assign(a * 3 * h, 0.0);
        gh.assign(a * 3 * h, 0.0);
        for (std::size_t i = 0; i < a; ++i) {
            const std::size_t s = active[i];
            const double* xr = x.data() + (s * t_max + t) * c;
            std::copy(xr, xr + c, xact.begin() + i * c);
            std::copy(h_state.begin() + s * h, h_state.begin() + (s + 1) * h, hact.begin() + i * h);
        }
        gemm_nn(xact.data(), p.wx.data(), gx.data(), a, c, 3 * h);
        gemm_nn(hact.data(), p.wh.data(), gh.data(), a, h, 3 * h);
        for (std::size_t i = 0; i < a; ++i) {
            const std::size_t s = active[i];
            const double* gxr = gx.data() + i * 3 * h;
            const double* ghr = gh.data() + i * 3 * h;
            double* hs = h_state.data() + s * h;
            const std::size_t base = (s * t_max + t) * h;
            for (std::size_t j = 0; j < h; ++j) {
                const double r = sigm(gxr[j] + p.bx.data()[j] + ghr[j] + p.bh.data()[j]);
                const double z =
                    sigm(gxr[h + j] + p.bx.data()[h + j] + ghr[h + j] + p.bh.data()[h + j]);
                const double m = ghr[2 * h + j] + p.bh.data()[2 * h + j];
                const double n = std::tanh(gxr[2 * h + j] + p.bx.data()[2 * h + j] + r * m);
                const double hnew = (1.0 - z) * n + z * hs[j];
                (*act_r)[base + j] = r;
                (*act_z)[base + j] = z;
                (*act_n)[base + j] = n;
                (*act_m)[base + j] = m;
                hs[j] = hnew;
                out[base + j] = hnew;
            }
        }
    }

    Tensor y = op_result(Shape{b, t_max, h}, std::move(out));
    Node* xn = x.impl().get();
    Node* wxn = p.wx.impl().get();
    Node* whn = p.wh.impl().get();
    Node* bxn = p.bx.impl().get();
    Node* bhn = p.bh.impl().get();
    const bool nx = xn->needs_grad();
    op_record(
        y, {x, p.wx, p.wh, p.bx, p.bh},
        [xn, wxn, whn, bxn, bhn, nx, b, t_max, c, h, lengths, act_r, act_z, act_n,
         act_m](Node& self) {
            if (nx) xn->ensure_grad();
            wxn->ensure_grad();
            whn->ensure_grad();
            bxn->ensure_grad();
            bhn->ensure_grad();
            std::vector<double> dh_state(b * h, 0.0);
            std::vector<std::size_t> active;
            std::vector<double> dgx, dgh, xact, hprev, dxact, dhprev;
            std::size_t t_hi = 0;
            for (std::size_t s = 0; s < b; ++s)
                t_hi = std::max(t_hi, static_cast<std::size_t>(lengths[s]));
            for (std::size_t t1 = t_hi; t1 > 0; --t1) {
                const std::size_t t = t1 - 1;
                active.clear();
                for (std::size_t s = 0; s < b; ++s) {
                    if (t < static_cast<std::size_t>(lengths[s])) active.push_back(s);
                }
                const std::size_t a = active.size();
                dgx.assign(a * 3 * h, 0.0);
                dgh.assign(a * 3 * h, 0.0);
                xact.resize(a * c);
                hprev.assign(a * h, 0.0);
                for (std::size_t i = 0; i < a; ++i) {
                    const std::size_t s = active[i];
                    const std::size_t base = (s * t_max + t) * h;
                    const double* xr = xn->data.data() + (s * t_max + t) * c;
                    std::copy(xr, xr + c, xact.begin() + i * c);
                    const std::size_t pbase = (s * t_max + t - 1) * h;
                    for (std::size_t j = 0; j < h; ++j) {
                        const double hp = t > 0 ? self.data[pbase + j] : 0.0;
                        hprev[i * h + j] = hp;
                        const double r = (*act_r)[base + j];
                        const double z = (*act_z)[base + j];
                        const double n = (*act_n)[base + j];
                        const double m = (*act_m)[base + j];
                        const double dh = self.grad[base + j] + dh_state[s * h + j];
                        const double dz = dh * (hp - n);
                        const double dn = dh * (1.0 - z);
                        double dh_prev = dh * z;
                        const double dnhat = dn * (1.0 - n * n);
                        const double dr = dnhat * m;
                        const double dm = dnhat * r;
                        const double drhat = dr * r * (1.0 - r);
                        const double dzhat = dz * z * (1.0 - z);
                        double* dgxr = dgx.data() + i * 3 * h;
                        double* dghr = dgh.data() + i * 3 * h;
                        dgxr[j] = drhat;
                        dgxr[h + j] = dzhat;
                        dgxr[2 * h + j] = dnhat;
                        dghr[j] = drhat;
                        dghr[h + j] = dzhat;
                        dghr[2 * h + j] = dm;
                        dh_state[s * h + j] = dh_prev;  // += Wh^T part added below
                    }
                }
                gemm_tn_acc(xact.data(), dgx.data(), wxn->grad.data(), a, c, 3 * h);
                gemm_tn_acc(hprev.data(), dgh.data(), whn->grad.data(), a, h, 3 * h);
                for (std::size_t i = 0; i < a; ++i) {
                    for (std::size_t j = 0; j < 3 * h; ++j) {
                        bxn->grad[j] += dgx[i * 3 * h + j];
                        bhn->grad[j] += dgh[i * 3 * h + j];
                    }
                }
                if (nx) {
                    dxact.assign(a * c, 0.0);
                    gemm_nt_acc(dgx.data(), wxn->data.data(), dxact.data(), a, 3 * h, c);
                    for (std::size_t i = 0; i < a; ++i) {
                        const std::size_t s = active[i];
                        double* xg = xn->grad.data() + (s * t_max + t) * c;
                        for (std::size_t j = 0; j < c; ++j) xg[j] += dxact[i * c + j];
                    }
                }
                dhprev.assign(a * h, 0.0);
                gemm_nt_acc(dgh.data(), whn->data.data(), dhprev.data(), a, 3 * h, h);
                for (std::size_t i = 0; i < a; ++i) {
                    const std::size_t s = active[i];
                    for (std::size_t j = 0; j < h; ++j) dh_state[s * h + j] += dhprev[i * h + j];
                }
            }
        });
    return y;
}

}  // namespace rip
