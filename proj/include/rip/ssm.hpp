#pragma once

#include <cstddef>
#include <vector>

#include "rip/rng.hpp"
#include "rip/tensor.hpp"

namespace rip {

// Selective state-space (SSD) recurrence with per-head scalar decay:
//   alpha_t = exp(-dt[t,h] * exp(a_log[h]))
//   h_t     = alpha_t * h_{t-1} + dt[t,h] * (X[t,h] (x) B[t])
//   Y[t,h]  = h_t . C[t]                      (contraction over d_state)
// B and C are shared across heads (single group).

// Batched sequential scan. x: [B,T,H*P], dt: [B,T,H], b_in/c_in: [B,T,N],
// a_log: [H]. Output [B,T,H*P]; rows at t >= length are zero.
Tensor ssd_scan(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                const Tensor& a_log, const std::vector<int>& lengths, std::size_t n_heads);

// Unbatched variant matching the module contract: x [T,H,P], dt [T,H],
// b_in/c_in [T,N] -> [T,H,P].
Tensor ssd_scan(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                const Tensor& a_log);

// Chunk-parallel closed-form evaluation of the same recurrence (forward-only
// performance path; no graph recording). Semantics defined by ssd_scan.
Tensor ssd_scan_chunked(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                        const Tensor& a_log, const std::vector<int>& lengths, std::size_t n_heads,
                        std::size_t chunk);
Tensor ssd_scan_chunked(const Tensor& x, const Tensor& dt, const Tensor& b_in, const Tensor& c_in,
                        const Tensor& a_log, std::size_t chunk);

// Configuration of one selective block.
struct SsdConfig {
    std::size_t d_model = 64;
    std::size_t expand = 8;
    std::size_t d_state = 32;
    std::size_t d_conv = 4;
    std::size_t n_heads = 4;

    std::size_t d_inner() const { return expand * d_model; }
    std::size_t head_dim() const { return d_inner() / n_heads; }
    std::size_t conv_channels() const { return d_inner() + 2 * d_state; }
    std::size_t proj_width() const { return 2 * d_inner() + 2 * d_state + n_heads; }
};

// All learnable state of one Mamba2-style block. Projection output columns
// are laid out [X | B | C | dt | z]; the causal depthwise conv runs over the
// X/B/C span only.
struct Mamba2Block {
    SsdConfig cfg;
    Tensor in_proj_w;   // [d_model, proj_width]
    Tensor in_proj_b;   // [proj_width]
    Tensor conv_w;      // [d_conv, conv_channels]
    Tensor conv_b;      // [conv_channels]
    Tensor dt_bias;     // [n_heads]
    Tensor a_log;       // [n_heads]
    Tensor norm_gamma;  // [d_inner]
    Tensor norm_beta;   // [d_inner]
    Tensor out_proj_w;  // [d_inner, d_model]
    Tensor out_proj_b;  // [d_model]

    Mamba2Block(const SsdConfig& cfg, Rng& rng);

    // [B,T,d_model] -> [B,T,d_model]; uses the chunked scan when no graph is
    // being recorded.
    Tensor forward(const Tensor& x, const std::vector<int>& lengths) const;

    std::vector<Tensor> parameters() const;
};

// Unbatched convenience per the module contract: [T,d_model] -> [T,d_model].
Tensor mamba2_block_forward(const Mamba2Block& block, const Tensor& x);

}  // namespace rip
