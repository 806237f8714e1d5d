#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rip/data.hpp"
#include "rip/models.hpp"

namespace rip {

struct TrainConfig {
    std::string optimizer = "adamw";  // adamw | adam
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch_size = 16;
    std::size_t epochs = 20;
    std::string scheduler = "steplr";  // steplr | none
    std::size_t scheduler_step = 3;
    double scheduler_gamma = 0.8;
    std::size_t early_stop_patience = 5;  // 0 disables early stopping
    std::uint64_t seed = 0;
};

// base_lr * gamma^floor(epoch / step)
double step_lr(double base_lr, std::size_t epoch, std::size_t step = 3, double gamma = 0.8);

// Adam with optional decoupled weight decay (AdamW). Moments are
// zero-initialized; updates are bias-corrected.
class Optimizer {
public:
    Optimizer(std::vector<Tensor> params, const TrainConfig& cfg);

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    void zero_grad();
    void step();

    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_;
    double weight_decay_;
    bool decoupled_;
    std::size_t t_ = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

struct History {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;

    std::string to_text() const;
    static History from_text(const std::string& text);
};

// Sample set + the views a model consumes, normalized with train-fitted stats.
struct TaskData {
    std::vector<const Sample*> samples;
    std::vector<std::string> views;
    const NormStats* stats = nullptr;
};

std::vector<ViewBatch> assemble_batch(const TaskData& data, const std::vector<std::size_t>& idx);

std::vector<ManeuverLabel> predict(NeuralModel& model, const TaskData& data,
                                   std::size_t batch_size);
double evaluate_accuracy(NeuralModel& model, const TaskData& data, std::size_t batch_size);

// Seeded mini-batch training with validation-accuracy early stopping; the
// model is left holding the best epoch's weights.
History fit(NeuralModel& model, const TaskData& train, const TaskData& val,
            const TrainConfig& cfg);

}  // namespace rip
