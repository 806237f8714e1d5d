#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rip/data.hpp"
#include "rip/ops.hpp"
#include "rip/ssm.hpp"
#include "rip/tensor.hpp"

namespace rip {

struct ViewBatch {
    Tensor x;  // [B, T, D]
    std::vector<int> lengths;
};

// Common surface of the neural classifiers: logits out, parameters exposed
// for the optimizer and checkpointing, batch-norm buffers exposed separately.
class NeuralModel {
public:
    virtual ~NeuralModel() = default;

    // One ViewBatch per expected view, aligned by sample. Returns [B, 6]
    // pre-softmax scores.
    virtual Tensor forward_logits(const std::vector<ViewBatch>& views, bool training,
                                  Rng* dropout_rng) = 0;

    virtual std::vector<Tensor> parameters() const = 0;
    virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const = 0;
    virtual std::vector<std::pair<std::string, std::vector<double>*>> named_buffers() { return {}; }
    virtual std::size_t n_views() const = 0;
    virtual std::string method_name() const = 0;
};

Tensor forward_probs(NeuralModel& model, const std::vector<ViewBatch>& views, bool training,
                     Rng* dropout_rng);

struct Linear {
    Tensor w, b;
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const { return add_rowwise(matmul(x, w), b); }
};

// --- Mamba2 ------------------------------------------------------------------

struct MambaModelConfig {
    std::size_t feature_dim = 512;
    std::size_t d_model = 64;
    std::size_t n_blocks = 2;
    std::size_t d_state = 32;
    std::size_t d_conv = 4;
    std::size_t expand = 8;
    std::size_t n_heads = 4;
    std::string ensemble_combine = "logits";  // or "probs"

    SsdConfig ssd() const {
        SsdConfig c;
        c.d_model = d_model;
        c.expand = expand;
        c.d_state = d_state;
        c.d_conv = d_conv;
        c.n_heads = n_heads;
        return c;
    }
};

class FrontalMambaModel : public NeuralModel {
public:
    FrontalMambaModel(const MambaModelConfig& cfg, Rng& rng);

    Tensor forward_logits(const std::vector<ViewBatch>& views, bool training,
                          Rng* dropout_rng) override;
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t n_views() const override { return 1; }
    std::string method_name() const override { return "mamba2"; }

    const MambaModelConfig& config() const { return cfg_; }

private:
    MambaModelConfig cfg_;
    Linear in_proj_;
    std::vector<Mamba2Block> blocks_;
    Linear head_;
};

// Per-view frontal models combined by learnable scalar weights; softmax is
// applied once, after the weighted combination.
class MultiViewMambaEnsemble : public NeuralModel {
public:
    MultiViewMambaEnsemble(const MambaModelConfig& cfg, Rng& rng);

    Tensor forward_logits(const std::vector<ViewBatch>& views, bool training,
                          Rng* dropout_rng) override;
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t n_views() const override { return 3; }
    std::string method_name() const override { return "mamba2"; }

    Tensor view_weights() const { return view_weights_; }
    FrontalMambaModel& view_model(std::size_t i) { return *views_[i]; }

private:
    MambaModelConfig cfg_;
    std::vector<std::unique_ptr<FrontalMambaModel>> views_;
    Tensor view_weights_;
};

// --- CNN-LSTM ------------------------------------------------------------------

struct CnnLstmConfig {
    std::size_t feature_dim = 512;
    std::size_t views = 1;
    std::size_t conv_channels = 64;
    std::size_t conv_kernel = 3;
    double leaky_slope = 0.01;
    double dropout = 0.25;
    std::size_t lstm_hidden = 128;
    std::size_t lstm_layers = 2;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

struct ConvBlock {
    Tensor w;  // [K, Cin, Cout]
    Tensor b;
    Tensor gamma, beta;
    std::vector<double> running_mean, running_var;

    ConvBlock() = default;
    ConvBlock(std::size_t in, const CnnLstmConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x, const std::vector<int>& lengths, const CnnLstmConfig& cfg,
                   bool training, Rng* dropout_rng);
};

class CnnLstmModel : public NeuralModel {
public:
    CnnLstmModel(const CnnLstmConfig& cfg, Rng& rng);

    Tensor forward_logits(const std::vector<ViewBatch>& views, bool training,
                          Rng* dropout_rng) override;
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::vector<std::pair<std::string, std::vector<double>*>> named_buffers() override;
    std::size_t n_views() const override { return cfg_.views; }
    std::string method_name() const override { return "cnn_lstm"; }

    const CnnLstmConfig& config() const { return cfg_; }

private:
    CnnLstmConfig cfg_;
    std::vector<ConvBlock> conv_;                            // one per view
    std::vector<std::array<LstmDirParams, 2>> lstm_;         // [layer][fwd,bwd]
    Linear head_;
};

// --- baseline RNN ------------------------------------------------------------------

struct BaselineConfig {
    std::size_t feature_dim = 512;
    std::size_t views = 1;  // multi-view concatenates per frame (early fusion)
    std::size_t hidden = 128;
};

class BaselineRnnModel : public NeuralModel {
public:
    BaselineRnnModel(const BaselineConfig& cfg, Rng& rng);

    Tensor forward_logits(const std::vector<ViewBatch>& views, bool training,
                          Rng* dropout_rng) override;
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
    std::size_t n_views() const override { return cfg_.views; }
    std::string method_name() const override { return "baseline"; }

private:
    BaselineConfig cfg_;
    GruParams gru_;
    Linear head_;
};

// Standalone bidirectional LSTM layer used by the CNN-LSTM stack; exposed for
// direct testing.
Tensor lstm_bidir(const Tensor& x, const std::vector<int>& lengths,
                  const std::array<LstmDirParams, 2>& dirs);

LstmDirParams make_lstm_dir(std::size_t in, std::size_t hidden, Rng& rng);
GruParams make_gru(std::size_t in, std::size_t hidden, Rng& rng);

}  // namespace rip
