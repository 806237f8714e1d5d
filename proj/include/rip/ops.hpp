#pragma once

#include <cstdint>
#include <vector>

#include "rip/rng.hpp"
#include "rip/tensor.hpp"

namespace rip {

// --- activations -------------------------------------------------------------

Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);

// --- row ops -----------------------------------------------------------------

// numerically stable softmax over the last dimension
Tensor softmax(const Tensor& x);

// per-row standardization over the last dimension (population variance,
// eps inside the square root), then gamma * xhat + beta
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// --- sequence ops --------------------------------------------------------------
// Batched tensors are [B, T, C] with per-sample valid lengths; rows at
// t >= length are padding and never influence valid outputs.

// mean over the first `length` rows of each sample: [B,T,D] -> [B,D]
Tensor masked_mean_pool(const Tensor& x, const std::vector<int>& lengths);
// unbatched variant per the tensor-core contract: [T,D] -> [D]
Tensor masked_mean_pool(const Tensor& x, int valid_len);

// depthwise causal convolution, weight [K,C], bias [C]
Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);  // x: [T,C]
Tensor causal_conv1d_batched(const Tensor& x, const Tensor& w, const Tensor& bias);  // x: [B,T,C]

// full causal convolution, weight [K,Cin,Cout], bias [Cout]: [B,T,Cin] -> [B,T,Cout]
Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& bias);

// rows at t = length-1 / t = 0 of each sample: [B,T,D] -> [B,D]
Tensor gather_last(const Tensor& x, const std::vector<int>& lengths);
Tensor gather_first(const Tensor& x);

// --- loss ----------------------------------------------------------------------

// mean over the batch of -log softmax(logits)[target]; fused log-sum-exp
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);

// --- stochastic / normalization end-to-end layers -------------------------------

// inverted dropout; identity when training is false
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// batch norm over channels of [B,T,C]. Training mode uses statistics over the
// valid rows of the batch and updates the running buffers in place; eval mode
// normalizes with the running buffers.
Tensor batch_norm_seq(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const std::vector<int>& lengths, std::vector<double>& running_mean,
                      std::vector<double>& running_var, double momentum, double eps,
                      bool training);

// --- recurrent layers -------------------------------------------------------------

struct LstmDirParams {
    Tensor wx;  // [C, 4H], gate order i|f|g|o
    Tensor wh;  // [H, 4H]
    Tensor b;   // [4H]
};

// one LSTM direction over a padded batch; reverse=true runs from each
// sample's last valid frame backwards. Output [B,T,H], padded rows zero.
Tensor lstm_dir(const Tensor& x, const std::vector<int>& lengths, const LstmDirParams& p,
                bool reverse);

struct GruParams {
    Tensor wx;  // [C, 3H], gate order r|z|n
    Tensor wh;  // [H, 3H]
    Tensor bx;  // [3H]
    Tensor bh;  // [3H]
};

// forward GRU over a padded batch: [B,T,C] -> [B,T,H]
Tensor gru_forward(const Tensor& x, const std::vector<int>& lengths, const GruParams& p);

}  // namespace rip
