#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rip/models.hpp"
#include "rip/svm.hpp"
#include "rip/train.hpp"

namespace rip {

// Fully resolved run description: user config + method defaults, with the
// provenance of every value recorded for the config echo.
struct RunConfig {
    std::string task = "single";    // single | multi
    std::string method = "mamba2";  // mamba2 | svm | cnn_lstm | baseline
    std::string dataset;
    std::string out;
    std::uint64_t seed = 0;
    std::array<double, 3> split_ratios = {0.5, 0.2, 0.3};
    std::uint64_t split_seed = 0;

    TrainConfig train;
    MambaModelConfig mamba;
    CnnLstmConfig cnn;
    BaselineConfig baseline;
    SvmTaskConfig svm;

    std::vector<std::string> warnings;               // e.g. train keys ignored by svm
    std::map<std::string, std::string> provenance;   // dotted key -> default/config/cli

    std::vector<std::string> task_views() const {
        return task == "multi" ? std::vector<std::string>{"front", "left", "right"}
                               : std::vector<std::string>{"front"};
    }

    // Deterministic JSON echo of every applicable key plus its provenance.
    std::string resolved_json() const;
};

// Parses and validates a config JSON text; unknown keys are rejected, keys
// that do not apply to the method produce warnings. CLI overrides (seed, out,
// dataset) take precedence and are marked as such in the echo.
struct CliOverrides {
    bool has_seed = false;
    std::uint64_t seed = 0;
    std::string out;
    std::string dataset;
};

RunConfig resolve_run_config(const std::string& json_text, const CliOverrides& cli);

// Builds the configured neural model; feature_dim/views come from the dataset.
std::unique_ptr<NeuralModel> build_neural_model(const RunConfig& cfg, std::uint32_t feature_dim,
                                                Rng& rng);

}  // namespace rip
