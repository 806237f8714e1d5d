#include "rip/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rip/error.hpp"
#include "rip/ops.hpp"

namespace rip {

double step_lr(double base_lr, std::size_t epoch, std::size_t step, double gamma) {
    if (step == 0) throw ConfigError("step_lr: step must be positive");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
}

Optimizer::Optimizer(std::vector<Tensor> params, const TrainConfig& cfg)
    : params_(std::move(params)), lr_(cfg.lr), weight_decay_(cfg.weight_decay) {
    if (cfg.optimizer == "adamw") {
        decoupled_ = true;
    } else if (cfg.optimizer == "adam") {
        decoupled_ = false;
    } else {
        throw ConfigError("unknown optimizer '" + cfg.optimizer + "' (expected adamw or adam)");
    }
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.grad().assign(p.size(), 0.0);
}

void Optimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto& grad = p.grad();
        auto& data = p.values();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < data.size(); ++i) {
            double g = grad[i];
            if (!decoupled_ && weight_decay_ != 0.0) g += weight_decay_ * data[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            if (decoupled_) data[i] -= lr_ * weight_decay_ * data[i];
            data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::string History::to_text() const {
    std::ostringstream os;
    os << "# epoch train_loss train_acc val_acc lr\n";
    char buf[128];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%zu %.17g %.17g %.17g %.17g\n", e.epoch, e.train_loss,
                      e.train_acc, e.val_acc, e.lr);
        os << buf;
    }
    os << "best_epoch " << best_epoch << "\n";
    return os.str();
}

History History::from_text(const std::string& text) {
    History h;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string first;
        ls >> first;
        if (first == "best_epoch") {
            ls >> h.best_epoch;
            continue;
        }
        EpochStats e;
        e.epoch = std::stoul(first);
        ls >> e.train_loss >> e.train_acc >> e.val_acc >> e.lr;
        h.epochs.push_back(e);
    }
    return h;
}

std::vector<ViewBatch> assemble_batch(const TaskData& data, const std::vector<std::size_t>& idx) {
    std::vector<const Sample*> chosen;
    chosen.reserve(idx.size());
    for (auto i : idx) chosen.push_back(data.samples[i]);
    std::vector<ViewBatch> views;
    for (const auto& v : data.views) {
        PaddedBatch pb = build_batch(chosen, v, *data.stats);
        views.push_back(ViewBatch{std::move(pb.x), std::move(pb.lengths)});
    }
    return views;
}

namespace {

std::vector<int> batch_targets(const TaskData& data, const std::vector<std::size_t>& idx) {
    std::vector<int> t;
    t.reserve(idx.size());
    for (auto i : idx) t.push_back(label_code(data.samples[i]->label));
    return t;
}

}  // namespace

std::vector<ManeuverLabel> predict(NeuralModel& model, const TaskData& data,
                                   std::size_t batch_size) {
    NoGradGuard ng;
    std::vector<ManeuverLabel> out;
    out.reserve(data.samples.size());
    for (std::size_t start = 0; start < data.samples.size(); start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, data.samples.size());
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < stop; ++i) idx.push_back(i);
        auto views = assemble_batch(data, idx);
        Tensor logits = model.forward_logits(views, false, nullptr);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* row = logits.data() + r * logits.dim(1);
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.dim(1); ++j) {
                if (row[j] > row[best]) best = j;
            }
            out.push_back(static_cast<ManeuverLabel>(static_cast<int>(best)));
        }
    }
    return out;
}

double evaluate_accuracy(NeuralModel& model, const TaskData& data, std::size_t batch_size) {
    if (data.samples.empty()) throw ConfigError("evaluate_accuracy: empty sample set");
    const auto preds = predict(model, data, batch_size);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == data.samples[i]->label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

History fit(NeuralModel& model, const TaskData& train, const TaskData& val,
            const TrainConfig& cfg) {
    if (train.samples.empty()) throw ConfigError("fit: empty training set");
    if (val.samples.empty()) throw ConfigError("fit: empty validation set");
    if (cfg.lr <= 0.0) throw ConfigError("fit: lr must be positive");
    if (cfg.batch_size < 1) throw ConfigError("fit: batch_size must be >= 1");
    if (cfg.scheduler != "steplr" && cfg.scheduler != "none") {
        throw ConfigError("unknown scheduler '" + cfg.scheduler + "'");
    }

    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
    Rng dropout_rng = Rng::stream(cfg.seed, "dropout");

    auto params = model.parameters();
    Optimizer opt(params, cfg);

    auto snapshot = [&] {
        std::vector<std::vector<double>> snap;
        for (const auto& p : params) snap.push_back(p.values());
        for (auto& [name, buf] : model.named_buffers()) snap.push_back(*buf);
        return snap;
    };
    auto restore = [&](const std::vector<std::vector<double>>& snap) {
        std::size_t k = 0;
        for (auto& p : params) p.values() = snap[k++];
        for (auto& [name, buf] : model.named_buffers()) *buf = snap[k++];
    };

    History history;
    double best_val = -1.0;
    std::vector<std::vector<double>> best_state;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.scheduler == "steplr"
                              ? step_lr(cfg.lr, epoch, cfg.scheduler_step, cfg.scheduler_gamma)
                              : cfg.lr;
        opt.set_lr(lr);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            auto views = assemble_batch(train, idx);
            auto targets = batch_targets(train, idx);
            opt.zero_grad();
            Tensor logits = model.forward_logits(views, true, &dropout_rng);
            Tensor loss = cross_entropy_logits(logits, targets);
            if (!std::isfinite(loss.value())) {
                throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch));
            }
            loss.backward();
            opt.step();
            loss_sum += loss.value() * static_cast<double>(idx.size());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.train_acc = evaluate_accuracy(model, train, cfg.batch_size);
        stats.val_acc = evaluate_accuracy(model, val, cfg.batch_size);
        history.epochs.push_back(stats);

        if (stats.val_acc > best_val) {
            best_val = stats.val_acc;
            history.best_epoch = epoch;
            best_state = snapshot();
            since_best = 0;
        } else {
            ++since_best;
            if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) break;
        }
    }

    if (!best_state.empty()) restore(best_state);
    return history;
}

}  // namespace rip
