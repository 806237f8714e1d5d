#include "rip/models.hpp"

#include <cmath>

#include "rip/error.hpp"

namespace rip {

namespace {

constexpr std::size_t kClasses = 6;

void check_views(const std::vector<ViewBatch>& views, std::size_t expected, const char* who) {
    if (views.size() != expected) {
        throw ShapeError(std::string(who) + ": expected " + std::to_string(expected) +
                         " view batches, got " + std::to_string(views.size()));
    }
    for (std::size_t v = 1; v < views.size(); ++v) {
        if (views[v].x.dim(0) != views[0].x.dim(0) || views[v].lengths != views[0].lengths) {
            throw ShapeError(std::string(who) + ": view batches misaligned across views");
        }
    }
}

}  // namespace

Tensor forward_probs(NeuralModel& model, const std::vector<ViewBatch>& views, bool training,
                     Rng* dropout_rng) {
    return softmax(model.forward_logits(views, training, dropout_rng));
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    w = Tensor::uniform(Shape{in, out}, rng, -s, s);
    b = Tensor(Shape{out}, 0.0, true);
}

LstmDirParams make_lstm_dir(std::size_t in, std::size_t hidden, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
    LstmDirParams p;
    p.wx = Tensor::uniform(Shape{in, 4 * hidden}, rng, -s, s);
    p.wh = Tensor::uniform(Shape{hidden, 4 * hidden}, rng, -s, s);
    p.b = Tensor(Shape{4 * hidden}, 0.0, true);
    return p;
}

GruParams make_gru(std::size_t in, std::size_t hidden, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
    GruParams p;
    p.wx = Tensor::uniform(Shape{in, 3 * hidden}, rng, -s, s);
    p.wh = Tensor::uniform(Shape{hidden, 3 * hidden}, rng, -s, s);
    p.bx = Tensor(Shape{3 * hidden}, 0.0, true);
    p.bh = Tensor(Shape{3 * hidden}, 0.0, true);
    return p;
}

Tensor lstm_bidir(const Tensor& x, const std::vector<int>& lengths,
                  const std::array<LstmDirParams, 2>& dirs) {
    Tensor fwd = lstm_dir(x, lengths, dirs[0], false);
    Tensor bwd = lstm_dir(x, lengths, dirs[1], true);
    return concat_cols({fwd, bwd});
}

// --- Mamba2 ------------------------------------------------------------------

FrontalMambaModel::FrontalMambaModel(const MambaModelConfig& cfg, Rng& rng)
    : cfg_(cfg), in_proj_(cfg.feature_dim, cfg.d_model, rng) {
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) blocks_.emplace_back(cfg.ssd(), rng);
    head_ = Linear(cfg.d_model, kClasses, rng);
}

Tensor FrontalMambaModel::forward_logits(const std::vector<ViewBatch>& views, bool, Rng*) {
    check_views(views, 1, "frontal_mamba");
    const ViewBatch& batch = views[0];
    if (batch.x.dim(2) != cfg_.feature_dim) {
        throw ShapeError("frontal_mamba: feature width " + std::to_string(batch.x.dim(2)) +
                         " != configured " + std::to_string(cfg_.feature_dim));
    }
    Tensor h = in_proj_(batch.x);
    for (const auto& blk : blocks_) h = blk.forward(h, batch.lengths);
    Tensor pooled = masked_mean_pool(h, batch.lengths);
    return head_(pooled);
}

std::vector<Tensor> FrontalMambaModel::parameters() const {
    std::vector<Tensor> out{in_proj_.w, in_proj_.b};
    for (const auto& blk : blocks_) {
        auto p = blk.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    out.push_back(head_.w);
    out.push_back(head_.b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> FrontalMambaModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("in_proj.w", in_proj_.w);
    out.emplace_back("in_proj.b", in_proj_.b);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        const Mamba2Block& blk = blocks_[i];
        out.emplace_back(p + "in_proj_w", blk.in_proj_w);
        out.emplace_back(p + "in_proj_b", blk.in_proj_b);
        out.emplace_back(p + "conv_w", blk.conv_w);
        out.emplace_back(p + "conv_b", blk.conv_b);
        out.emplace_back(p + "dt_bias", blk.dt_bias);
        out.emplace_back(p + "a_log", blk.a_log);
        out.emplace_back(p + "norm_gamma", blk.norm_gamma);
        out.emplace_back(p + "norm_beta", blk.norm_beta);
        out.emplace_back(p + "out_proj_w", blk.out_proj_w);
        out.emplace_back(p + "out_proj_b", blk.out_proj_b);
    }
    out.emplace_back("head.w", head_.w);
    out.emplace_back("head.b", head_.b);
    return out;
}

MultiViewMambaEnsemble::MultiViewMambaEnsemble(const MambaModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    for (int v = 0; v < 3; ++v) views_.push_back(std::make_unique<FrontalMambaModel>(cfg, rng));
    view_weights_ = Tensor(Shape{3}, 1.0 / 3.0, true);
}

Tensor MultiViewMambaEnsemble::forward_logits(const std::vector<ViewBatch>& views, bool training,
                                              Rng* rng) {
    check_views(views, 3, "multiview_mamba");
    std::vector<Tensor> per_view;
    per_view.reserve(3);
    for (std::size_t v = 0; v < 3; ++v) {
        Tensor logits = views_[v]->forward_logits({views[v]}, training, rng);
        per_view.push_back(cfg_.ensemble_combine == "probs" ? softmax(logits) : logits);
    }
    return weighted_sum(per_view, view_weights_);
}

std::vector<Tensor> MultiViewMambaEnsemble::parameters() const {
    std::vector<Tensor> out;
    for (const auto& m : views_) {
        auto p = m->parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    out.push_back(view_weights_);
    return out;
}

std::vector<std::pair<std::string, Tensor>> MultiViewMambaEnsemble::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t v = 0; v < 3; ++v) {
        for (auto& [name, t] : views_[v]->named_parameters()) {
            out.emplace_back(kViewNames[v] + "." + name, t);
        }
    }
    out.emplace_back("view_weights", view_weights_);
    return out;
}

// --- CNN-LSTM ------------------------------------------------------------------

ConvBlock::ConvBlock(std::size_t in, const CnnLstmConfig& cfg, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in * cfg.conv_kernel));
    w = Tensor::uniform(Shape{cfg.conv_kernel, in, cfg.conv_channels}, rng, -s, s);
    b = Tensor(Shape{cfg.conv_channels}, 0.0, true);
    gamma = Tensor(Shape{cfg.conv_channels}, 1.0, true);
    beta = Tensor(Shape{cfg.conv_channels}, 0.0, true);
    running_mean.assign(cfg.conv_channels, 0.0);
    running_var.assign(cfg.conv_channels, 1.0);
}

Tensor ConvBlock::forward(const Tensor& x, const std::vector<int>& lengths,
                          const CnnLstmConfig& cfg, bool training, Rng* dropout_rng) {
    Tensor h = conv1d_causal(x, w, b);
    h = batch_norm_seq(h, gamma, beta, lengths, running_mean, running_var, cfg.bn_momentum,
                       cfg.bn_eps, training);
    h = leaky_relu(h, cfg.leaky_slope);
    if (training && cfg.dropout > 0.0) {
        if (!dropout_rng) throw Error("cnn_lstm: training forward needs a dropout rng");
        h = dropout(h, cfg.dropout, true, *dropout_rng);
    }
    return h;
}

CnnLstmModel::CnnLstmModel(const CnnLstmConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.views != 1 && cfg.views != 3) throw ConfigError("cnn_lstm: views must be 1 or 3");
    for (std::size_t v = 0; v < cfg.views; ++v) conv_.emplace_back(cfg.feature_dim, cfg, rng);
    std::size_t in = cfg.conv_channels * cfg.views;
    for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
        lstm_.push_back({make_lstm_dir(in, cfg.lstm_hidden, rng),
                         make_lstm_dir(in, cfg.lstm_hidden, rng)});
        in = 2 * cfg.lstm_hidden;
    }
    head_ = Linear(2 * cfg.lstm_hidden, kClasses, rng);
}

Tensor CnnLstmModel::forward_logits(const std::vector<ViewBatch>& views, bool training, Rng* rng) {
    check_views(views, cfg_.views, "cnn_lstm");
    const std::vector<int>& lengths = views[0].lengths;
    std::vector<Tensor> conv_outs;
    for (std::size_t v = 0; v < cfg_.views; ++v) {
        conv_outs.push_back(conv_[v].forward(views[v].x, lengths, cfg_, training, rng));
    }
    Tensor h = cfg_.views == 1 ? conv_outs[0] : concat_cols(conv_outs);
    for (const auto& layer : lstm_) h = lstm_bidir(h, lengths, layer);
    // last valid step of the forward direction, first step of the backward one
    Tensor fwd_last = gather_last(col_slice(h, 0, cfg_.lstm_hidden), lengths);
    Tensor bwd_first = gather_first(col_slice(h, cfg_.lstm_hidden, 2 * cfg_.lstm_hidden));
    return head_(concat_cols({fwd_last, bwd_first}));
}

std::vector<Tensor> CnnLstmModel::parameters() const {
    std::vector<Tensor> out;
    for (const auto& c : conv_) {
        out.push_back(c.w);
        out.push_back(c.b);
        out.push_back(c.gamma);
        out.push_back(c.beta);
    }
    for (const auto& layer : lstm_) {
        for (const auto& dir : layer) {
            out.push_back(dir.wx);
            out.push_back(dir.wh);
            out.push_back(dir.b);
        }
    }
    out.push_back(head_.w);
    out.push_back(head_.b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> CnnLstmModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t v = 0; v < conv_.size(); ++v) {
        const std::string p = "conv" + std::to_string(v) + ".";
        out.emplace_back(p + "w", conv_[v].w);
        out.emplace_back(p + "b", conv_[v].b);
        out.emplace_back(p + "gamma", conv_[v].gamma);
        out.emplace_back(p + "beta", conv_[v].beta);
    }
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
        const std::string layer = "lstm" + std::to_string(l) + ".";
        const char* dir_name[2] = {"fwd.", "bwd."};
        for (int d = 0; d < 2; ++d) {
            out.emplace_back(layer + dir_name[d] + "wx", lstm_[l][d].wx);
            out.emplace_back(layer + dir_name[d] + "wh", lstm_[l][d].wh);
            out.emplace_back(layer + dir_name[d] + "b", lstm_[l][d].b);
        }
    }
    out.emplace_back("head.w", head_.w);
    out.emplace_back("head.b", head_.b);
    return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> CnnLstmModel::named_buffers() {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    for (std::size_t v = 0; v < conv_.size(); ++v) {
        const std::string p = "conv" + std::to_string(v) + ".";
        out.emplace_back(p + "running_mean", &conv_[v].running_mean);
        out.emplace_back(p + "running_var", &conv_[v].running_var);
    }
    return out;
}

// --- baseline ------------------------------------------------------------------

BaselineRnnModel::BaselineRnnModel(const BaselineConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.views != 1 && cfg.views != 3) throw ConfigError("baseline: views must be 1 or 3");
    gru_ = make_gru(cfg.feature_dim * cfg.views, cfg.hidden, rng);
    head_ = Linear(cfg.hidden, kClasses, rng);
}

Tensor BaselineRnnModel::forward_logits(const std::vector<ViewBatch>& views, bool, Rng*) {
    check_views(views, cfg_.views, "baseline");
    std::vector<Tensor> xs;
    for (const auto& v : views) xs.push_back(v.x);
    Tensor x = xs.size() == 1 ? xs[0] : concat_cols(xs);  // early fusion per frame
    Tensor h = gru_forward(x, views[0].lengths, gru_);
    return head_(gather_last(h, views[0].lengths));
}

std::vector<Tensor> BaselineRnnModel::parameters() const {
    return {gru_.wx, gru_.wh, gru_.bx, gru_.bh, head_.w, head_.b};
}

std::vector<std::pair<std::string, Tensor>> BaselineRnnModel::named_parameters() const {
    return {{"gru.wx", gru_.wx}, {"gru.wh", gru_.wh}, {"gru.bx", gru_.bx},
            {"gru.bh", gru_.bh}, {"head.w", head_.w}, {"head.b", head_.b}};
}

}  // namespace rip
