#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "rip/data.hpp"

namespace rip {

// Maneuver-detection tallies. ST-predicted-as-ST pairs are counted in none
// of the four buckets.
struct MetricCounts {
    std::size_t tp = 0;   // maneuver predicted correctly
    std::size_t fp = 0;   // wrong maneuver predicted for a maneuver
    std::size_t fpp = 0;  // maneuver predicted while driving straight
    std::size_t mp = 0;   // straight predicted while a maneuver is performed
};

struct PerClassMetrics {
    std::optional<double> accuracy;  // empty when the class is absent from targets
    double f1 = 0.0;                 // one-vs-rest F1
};

struct EvalReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;        // from pooled maneuver counts
    double macro_f1 = 0.0;  // mean per-class F1 over classes present in targets
    std::array<PerClassMetrics, 6> per_class;
    std::array<std::array<std::size_t, 6>, 6> confusion{};  // [target][prediction]
    std::size_t n = 0;
};

double accuracy(const std::vector<ManeuverLabel>& preds, const std::vector<ManeuverLabel>& targets);

MetricCounts maneuver_counts(const std::vector<ManeuverLabel>& preds,
                             const std::vector<ManeuverLabel>& targets);

// P = tp/(tp+fp+fpp), R = tp/(tp+fp+mp), F1 = 2PR/(P+R); 0/0 defined as 0
struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};
Prf maneuver_prf(const MetricCounts& counts);

EvalReport per_class_report(const std::vector<ManeuverLabel>& preds,
                            const std::vector<ManeuverLabel>& targets);

// Flat key-value serialization with percentages at two decimals, plus the
// 6x6 confusion matrix; mirrors the published result-table formatting.
std::string format_report(const EvalReport& report);

}  // namespace rip
