#include "rip/ssm.hpp"

#include <algorithm>
#include <cmath>

#include "rip/error.hpp"
#include "rip/gemm.hpp"
#include "rip/ops.hpp"
#include "rip/parallel.hpp"

namespace rip {

namespace {

using detail::Node;
using detail::op_record;
using detail::op_result;

struct ScanDims {
    std::size_t b, t_max, h, p, n;
};

ScanDims check_scan_args(const Tensor& x, const Tensor& dt, const Tensor& b_in,
                         const Tensor& c_in, const Tensor& a_log,
                         const std::vector<int>& lengths, std::size_t n_heads) {
    if (x.rank() != 3) throw ShapeError("ssd_scan: x must be [B,T,H*P], got " + shape_str(x.shape()));
    ScanDims d{};
    d.b = x.dim(0);
    d.t_max = x.dim(1);
    d.h = n_heads;
    if (n_heads == 0 || x.dim(2) % n_heads != 0) {
        throw ShapeError("ssd_scan: inner width " + std::to_string(x.dim(2)) +
                         " not divisible by " + std::to_string(n_heads) + " heads");
    }
    d.p = x.dim(2) / n_heads;
    if (dt.rank() != 3 || dt.dim(0) != d.b || dt.dim(1) != d.t_max || dt.dim(2) != d.h) {
        throw ShapeError("ssd_scan: dt must be [B,T,H], got " + shape_str(dt.shape()));
    }
    if (b_in.rank() != 3 || b_in.dim(0) != d.b || b_in.dim(1) != d.t_max) {
        throw ShapeError("ssd_scan: B must be [B,T,N], got " + shape_str(b_in.shape()));
    }
    d.n = b_in.dim(2);
    if (c_in.shape() != b_in.shape()) {
        throw ShapeError("ssd_scan: C shape " + shape_str(c_in.shape()) + " must match B " +
                         shape_str(b_in.shape()));
    }
    if (a_log.rank() != 1 || a_log.dim(0) != d.h) {
        throw ShapeError("ssd_scan: a_log must be [H]");
    }
    if (lengths.size() != d.b) throw ShapeError("ssd_scan: one length per sample");
    for (int l : lengths) {
        if (l < 1 || static_cast<std::size_t>(l) > d.t_max) {
            throw ShapeError("ssd_scan: bad valid length " + std::to_string(l));
        }
    }
    for (double v : dt.values()) {
        if (v < 0.0) throw Error("ssd_scan: dt must be nonnegative");
    }
    return d;
}

}  // namespace

Tensor ssd_scan(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                const Tensor& a_log, const std::vector<int>& lengths, std::size_t n_heads) {
    const ScanDims d = check_scan_args(x, dt, b_in, c_in, a_log, lengths, n_heads);
    const std::size_t hp = d.h * d.p;
    std::vector<double> out(d.b * d.t_max * hp, 0.0);

    auto run_sample_head = [&](std::size_t s, std::size_t head, double* state /*[P,N]*/) {
        const std::size_t len = static_cast<std::size_t>(lengths[s]);
        const double a = std::exp(a_log.data()[head]);
        std::fill(state, state + d.p * d.n, 0.0);
        for (std::size_t t = 0; t < len; ++t) {
            const double dtv = dt.data()[(s * d.t_max + t) * d.h + head];
            const double alpha = std::exp(-dtv * a);
            const double* br = b_in.data() + (s * d.t_max + t) * d.n;
            const double* cr = c_in.data() + (s * d.t_max + t) * d.n;
            const double* xr = x.data() + (s * d.t_max + t) * hp + head * d.p;
            double* yr = out.data() + (s * d.t_max + t) * hp + head * d.p;
            for (std::size_t pp = 0; pp < d.p; ++pp) {
                double* st = state + pp * d.n;
                const double inj = dtv * xr[pp];
                for (std::size_t nn = 0; nn < d.n; ++nn) st[nn] = alpha * st[nn] + inj * br[nn];
                yr[pp] = fixed_dot(st, cr, d.n);
            }
        }
    };

    {
        std::vector<double> state(d.p * d.n);
        auto body = [&](std::size_t i0, std::size_t i1) {
            std::vector<double> st(d.p * d.n);
            for (std::size_t i = i0; i < i1; ++i) run_sample_head(i / d.h, i % d.h, st.data());
        };
        if (d.b * d.h > 1) {
            parallel_for(d.b * d.h, body);
        } else {
            run_sample_head(0, 0, state.data());
        }
    }

    Tensor y = op_result(Shape{d.b, d.t_max, hp}, std::move(out));
    Node* xn = x.impl().get();
    Node* dtn = dt.impl().get();
    Node* bn = b_in.impl().get();
    Node* cn = c_in.impl().get();
    Node* an = a_log.impl().get();
    const bool nx = xn->needs_grad(), ndt = dtn->needs_grad(), nb = bn->needs_grad(),
               nc = cn->needs_grad(), na = an->needs_grad();
    op_record(y, {x, dt, b_in, c_in, a_log}, [=](Node& self) {
        if (nx) xn->ensure_grad();
        if (ndt) dtn->ensure_grad();
        if (nb) bn->ensure_grad();
        if (nc) cn->ensure_grad();
        if (na) an->ensure_grad();
        // per-sample adjoint sweep; heads serial within a sample because
        // dB/dC accumulate across heads
        std::vector<double> da_partial(d.b * d.h, 0.0);
        auto body = [&](std::size_t s0, std::size_t s1) {
            std::vector<double> hist;  // [len, P, N] recomputed states
            std::vector<double> adj(d.p * d.n);
            for (std::size_t s = s0; s < s1; ++s) {
                const std::size_t len = static_cast<std::size_t>(lengths[s]);
                hist.resize(len * d.p * d.n);
                for (std::size_t head = 0; head < d.h; ++head) {
                    const double a = std::exp(an->data[head]);
                    // forward recomputation of the state history
                    for (std::size_t t = 0; t < len; ++t) {
                        const double dtv = dtn->data[(s * d.t_max + t) * d.h + head];
                        const double alpha = std::exp(-dtv * a);
                        const double* br = bn->data.data() + (s * d.t_max + t) * d.n;
                        const double* xr = xn->data.data() + (s * d.t_max + t) * hp + head * d.p;
                        const double* prev = t > 0 ? hist.data() + (t - 1) * d.p * d.n : nullptr;
                        double* cur = hist.data() + t * d.p * d.n;
                        for (std::size_t pp = 0; pp < d.p; ++pp) {
                            const double inj = dtv * xr[pp];
                            double* cr = cur + pp * d.n;
                            const double* pr = prev ? prev + pp * d.n : nullptr;
                            for (std::size_t nn = 0; nn < d.n; ++nn) {
                                cr[nn] = (pr ? alpha * pr[nn] : 0.0) + inj * br[nn];
                            }
                        }
                    }
                    // adjoint sweep
                    std::fill(adj.begin(), adj.end(), 0.0);
                    double da_acc = 0.0;
                    for (std::size_t t1 = len; t1 > 0; --t1) {
                        const std::size_t t = t1 - 1;
                        const std::size_t row = s * d.t_max + t;
                        const double dtv = dtn->data[row * d.h + head];
                        const double alpha = std::exp(-dtv * a);
                        const double* br = bn->data.data() + row * d.n;
                        const double* crow = cn->data.data() + row * d.n;
                        const double* xr = xn->data.data() + row * hp + head * d.p;
                        const double* gy = self.grad.data() + row * hp + head * d.p;
                        const double* h_cur = hist.data() + t * d.p * d.n;
                        const double* h_prev = t > 0 ? hist.data() + (t - 1) * d.p * d.n : nullptr;
                        double ddt_inj = 0.0, ddt_decay = 0.0;
                        for (std::size_t pp = 0; pp < d.p; ++pp) {
                            double* ar = adj.data() + pp * d.n;
                            const double* hc = h_cur + pp * d.n;
                            const double gyp = gy[pp];
                            // G_t = dY_t (x) C_t + carried adjoint
                            for (std::size_t nn = 0; nn < d.n; ++nn) ar[nn] += gyp * crow[nn];
                            if (nc) {
                                double* cg = cn->grad.data() + row * d.n;
                                for (std::size_t nn = 0; nn < d.n; ++nn) cg[nn] += gyp * hc[nn];
                            }
                            const double g_dot_b = fixed_dot(ar, br, d.n);
                            if (nx) xn->grad[row * hp + head * d.p + pp] += dtv * g_dot_b;
                            ddt_inj += g_dot_b * xr[pp];
                            if (nb) {
                                const double w = dtv * xr[pp];
                                double* bg = bn->grad.data() + row * d.n;
                                for (std::size_t nn = 0; nn < d.n; ++nn) bg[nn] += w * ar[nn];
                            }
                            if (h_prev) {
                                ddt_decay += fixed_dot(ar, h_prev + pp * d.n, d.n);
                            }
                            // propagate to h_{t-1}
                            for (std::size_t nn = 0; nn < d.n; ++nn) ar[nn] *= alpha;
                        }
                        if (ndt) {
                            dtn->grad[row * d.h + head] += ddt_inj - a * alpha * ddt_decay;
                        }
                        da_acc += -dtv * alpha * ddt_decay;
                    }
                    da_partial[s * d.h + head] = a * da_acc;
                }
            }
        };
        if (d.b > 1) parallel_for(d.b, body); else body(0, d.b);
        if (na) {
            for (std::size_t s = 0; s < d.b; ++s) {
                for (std::size_t head = 0; head < d.h; ++head) {
                    an->grad[head] += da_partial[s * d.h + head];
                }
            }
        }
    });
    return y;
}

Tensor ssd_scan(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                const Tensor& a_log) {
    if (x.rank() != 3) throw ShapeError("ssd_scan: x must be [T,H,P], got " + shape_str(x.shape()));
    const std::size_t t = x.dim(0), h = x.dim(1), p = x.dim(2);
    if (dt.rank() != 2 || dt.dim(0) != t || dt.dim(1) != h) {
        throw ShapeError("ssd_scan: dt must be [T,H], got " + shape_str(dt.shape()));
    }
    Tensor xb = reshape(x, Shape{1, t, h * p});
    Tensor dtb = reshape(dt, Shape{1, t, h});
    Tensor bb = reshape(b_in, Shape{1, b_in.dim(0), b_in.dim(1)});
    Tensor cb = reshape(c_in, Shape{1, c_in.dim(0), c_in.dim(1)});
    Tensor y = ssd_scan(xb, dtb, bb, cb, a_log, {static_cast<int>(t)}, h);
    return reshape(y, Shape{t, h, p});
}

Tensor ssd_scan_chunked(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                        const Tensor& a_log, const std::vector<int>& lengths, std::size_t n_heads,
                        std::size_t chunk) {
    if (chunk < 1) throw Error("ssd_scan_chunked: chunk must be >= 1");
    const ScanDims d = check_scan_args(x, dt, b_in, c_in, a_log, lengths, n_heads);
    chunk = std::min(chunk, d.t_max);
    const std::size_t hp = d.h * d.p;
    std::vector<double> out(d.b * d.t_max * hp, 0.0);

    auto body = [&](std::size_t i0, std::size_t i1) {
        std::vector<double> state(d.p * d.n), state_next(d.p * d.n);
        std::vector<double> ell(chunk), weight(chunk * chunk), cb_dot(chunk * chunk);
        for (std::size_t i = i0; i < i1; ++i) {
            const std::size_t s = i / d.h;
            const std::size_t head = i % d.h;
            const std::size_t len = static_cast<std::size_t>(lengths[s]);
            const double a = std::exp(a_log.data()[head]);
            std::fill(state.begin(), state.end(), 0.0);
            for (std::size_t t0 = 0; t0 < len; t0 += chunk) {
                const std::size_t l = std::min(chunk, len - t0);
                // cumulative log-decay within the chunk (log alpha_u = -dt_u * a)
                double run = 0.0;
                for (std::size_t u = 0; u < l; ++u) {
                    run += -dt.data()[(s * d.t_max + t0 + u) * d.h + head] * a;
                    ell[u] = run;
                }
                // pairwise C_t . B_u for the chunk
                for (std::size_t t = 0; t < l; ++t) {
                    const double* cr = c_in.data() + (s * d.t_max + t0 + t) * d.n;
                    for (std::size_t u = 0; u <= t; ++u) {
                        const double* br = b_in.data() + (s * d.t_max + t0 + u) * d.n;
                        cb_dot[t * chunk + u] = fixed_dot(cr, br, d.n);
                    }
                }
                for (std::size_t t = 0; t < l; ++t) {
                    for (std::size_t u = 0; u <= t; ++u) {
                        const double dtu = dt.data()[(s * d.t_max + t0 + u) * d.h + head];
                        weight[t * chunk + u] =
                            std::exp(ell[t] - ell[u]) * dtu * cb_dot[t * chunk + u];
                    }
                }
                // outputs: inter-chunk (carried state) + intra-chunk closed form
                for (std::size_t t = 0; t < l; ++t) {
                    const std::size_t row = s * d.t_max + t0 + t;
                    const double* cr = c_in.data() + row * d.n;
                    const double et = std::exp(ell[t]);
                    double* yr = out.data() + row * hp + head * d.p;
                    for (std::size_t pp = 0; pp < d.p; ++pp) {
                        const double* st = state.data() + pp * d.n;
                        double acc = et * fixed_dot(st, cr, d.n);
                        for (std::size_t u = 0; u <= t; ++u) {
                            acc += weight[t * chunk + u] *
                                   x.data()[(s * d.t_max + t0 + u) * hp + head * d.p + pp];
                        }
                        yr[pp] = acc;
                    }
                }
                // carry state across the chunk boundary
                const double e_last = std::exp(ell[l - 1]);
                for (std::size_t pp = 0; pp < d.p; ++pp) {
                    double* sn = state_next.data() + pp * d.n;
                    const double* st = state.data() + pp * d.n;
                    for (std::size_t nn = 0; nn < d.n; ++nn) sn[nn] = e_last * st[nn];
                }
                for (std::size_t u = 0; u < l; ++u) {
                    const std::size_t row = s * d.t_max + t0 + u;
                    const double dtu = dt.data()[row * d.h + head];
                    const double scale = std::exp(ell[l - 1] - ell[u]) * dtu;
                    const double* br = b_in.data() + row * d.n;
                    const double* xr = x.data() + row * hp + head * d.p;
                    for (std::size_t pp = 0; pp < d.p; ++pp) {
                        double* sn = state_next.data() + pp * d.n;
                        const double sx = scale * xr[pp];
                        for (std::size_t nn = 0; nn < d.n; ++nn) sn[nn] += sx * br[nn];
                    }
                }
                std::swap(state, state_next);
            }
        }
    };
    if (d.b * d.h > 1) parallel_for(d.b * d.h, body); else body(0, d.b * d.h);
    return op_result(Shape{d.b, d.t_max, hp}, std::move(out));
}

Tensor ssd_scan_chunked(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                        const Tensor& a_log, std::size_t chunk) {
    const std::size_t t = x.dim(0), h = x.dim(1), p = x.dim(2);
    Tensor xb = reshape(x, Shape{1, t, h * p});
    Tensor dtb = reshape(dt, Shape{1, t, h});
    Tensor bb = reshape(b_in, Shape{1, b_in.dim(0), b_in.dim(1)});
    Tensor cb = reshape(c_in, Shape{1, c_in.dim(0), c_in.dim(1)});
    Tensor y = ssd_scan_chunked(xb, dtb, bb, cb, a_log, {static_cast<int>(t)}, h, chunk);
    return reshape(y, Shape{t, h, p});
}

// --- block ------------------------------------------------------------------------

Mamba2Block::Mamba2Block(const SsdConfig& c, Rng& rng) : cfg(c) {
    if (c.d_inner() % c.n_heads != 0) {
        throw ConfigError("mamba2: d_inner " + std::to_string(c.d_inner()) +
                          " not divisible by n_heads " + std::to_string(c.n_heads));
    }
    const double s_in = 1.0 / std::sqrt(static_cast<double>(c.d_model));
    in_proj_w = Tensor::uniform(Shape{c.d_model, c.proj_width()}, rng, -s_in, s_in);
    in_proj_b = Tensor(Shape{c.proj_width()}, 0.0, true);
    const double s_conv = 1.0 / std::sqrt(static_cast<double>(c.d_conv));
    conv_w = Tensor::uniform(Shape{c.d_conv, c.conv_channels()}, rng, -s_conv, s_conv);
    conv_b = Tensor(Shape{c.conv_channels()}, 0.0, true);
    // softplus(dt_bias) ~= 0.01: small initial steps
    dt_bias = Tensor(Shape{c.n_heads}, std::log(std::expm1(0.01)), true);
    // decay rates evenly spread over [1, n_heads]
    a_log = Tensor(Shape{c.n_heads}, 0.0, true);
    for (std::size_t i = 0; i < c.n_heads; ++i) {
        const double frac =
            c.n_heads == 1 ? 0.0
                           : static_cast<double>(i) / (static_cast<double>(c.n_heads) - 1.0);
        a_log.values()[i] = std::log(1.0 + frac * (static_cast<double>(c.n_heads) - 1.0));
    }
    norm_gamma = Tensor(Shape{c.d_inner()}, 1.0, true);
    norm_beta = Tensor(Shape{c.d_inner()}, 0.0, true);
    const double s_out = 1.0 / std::sqrt(static_cast<double>(c.d_inner()));
    out_proj_w = Tensor::uniform(Shape{c.d_inner(), c.d_model}, rng, -s_out, s_out);
    out_proj_b = Tensor(Shape{c.d_model}, 0.0, true);
}

Tensor Mamba2Block::forward(const Tensor& x, const std::vector<int>& lengths) const {
    if (x.rank() != 3 || x.dim(2) != cfg.d_model) {
        throw ShapeError("mamba2_block: expected [B,T," + std::to_string(cfg.d_model) +
                         "], got " + shape_str(x.shape()));
    }
    const std::size_t di = cfg.d_inner();
    const std::size_t n = cfg.d_state;
    const std::size_t nh = cfg.n_heads;

    Tensor proj = add_rowwise(matmul(x, in_proj_w), in_proj_b);
    Tensor main = col_slice(proj, 0, cfg.conv_channels());
    Tensor dt_raw = col_slice(proj, cfg.conv_channels(), cfg.conv_channels() + nh);
    Tensor z = col_slice(proj, cfg.conv_channels() + nh, cfg.proj_width());

    Tensor conved = silu(causal_conv1d_batched(main, conv_w, conv_b));
    Tensor xs = col_slice(conved, 0, di);
    Tensor bs = col_slice(conved, di, di + n);
    Tensor cs = col_slice(conved, di + n, di + 2 * n);
    Tensor dt = softplus(add_rowwise(dt_raw, dt_bias));

    Tensor y = detail::grad_mode() && xs.needs_grad()
                   ? ssd_scan(xs, dt, bs, cs, a_log, lengths, nh)
                   : ssd_scan_chunked(xs, dt, bs, cs, a_log, lengths, nh, 32);
    y = mul(y, silu(z));
    y = layer_norm(y, norm_gamma, norm_beta, 1e-5);
    return add_rowwise(matmul(y, out_proj_w), out_proj_b);
}

std::vector<Tensor> Mamba2Block::parameters() const {
    return {in_proj_w, in_proj_b, conv_w,     conv_b,    dt_bias,
            a_log,     norm_gamma, norm_beta, out_proj_w, out_proj_b};
}

Tensor mamba2_block_forward(const Mamba2Block& block, const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("mamba2_block: expected [T,d_model]");
    Tensor xb = reshape(x, Shape{1, x.dim(0), x.dim(1)});
    Tensor y = block.forward(xb, {static_cast<int>(x.dim(0))});
    return reshape(y, x.shape());
}

}  // namespace rip
