#include "rip/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "rip/error.hpp"

namespace rip {

namespace {

void check_pair(const std::vector<ManeuverLabel>& preds,
                const std::vector<ManeuverLabel>& targets) {
    if (preds.size() != targets.size()) {
        throw ShapeError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    }
    if (preds.empty()) throw ShapeError("metrics: empty label lists");
}

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

double accuracy(const std::vector<ManeuverLabel>& preds,
                const std::vector<ManeuverLabel>& targets) {
    check_pair(preds, targets);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == targets[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

MetricCounts maneuver_counts(const std::vector<ManeuverLabel>& preds,
                             const std::vector<ManeuverLabel>& targets) {
    check_pair(preds, targets);
    MetricCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool target_maneuver = is_maneuver(targets[i]);
        const bool pred_maneuver = is_maneuver(preds[i]);
        if (target_maneuver) {
            if (preds[i] == targets[i]) {
                ++c.tp;
            } else if (pred_maneuver) {
                ++c.fp;
            } else {
                ++c.mp;
            }
        } else if (pred_maneuver) {
            ++c.fpp;
        }
        // target ST, predicted ST: counted nowhere
    }
    return c;
}

Prf maneuver_prf(const MetricCounts& c) {
    Prf out;
    out.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fpp));
    out.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.mp));
    out.f1 = safe_div(2.0 * out.precision * out.recall, out.precision + out.recall);
    return out;
}

EvalReport per_class_report(const std::vector<ManeuverLabel>& preds,
                            const std::vector<ManeuverLabel>& targets) {
    check_pair(preds, targets);
    EvalReport rep;
    rep.n = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ++rep.confusion[label_code(targets[i])][label_code(preds[i])];
    }
    rep.accuracy = accuracy(preds, targets);
    const Prf prf = maneuver_prf(maneuver_counts(preds, targets));
    rep.precision = prf.precision;
    rep.recall = prf.recall;
    rep.f1 = prf.f1;

    double macro_sum = 0.0;
    std::size_t macro_n = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        std::size_t row_sum = 0, col_sum = 0;
        for (int j = 0; j < kNumClasses; ++j) {
            row_sum += rep.confusion[c][j];
            col_sum += rep.confusion[j][c];
        }
        const std::size_t tp = rep.confusion[c][c];
        PerClassMetrics& pc = rep.per_class[c];
        if (row_sum > 0) {
            pc.accuracy = static_cast<double>(tp) / static_cast<double>(row_sum);
        }
        // one-vs-rest F1: fn = row_sum - tp, fp = col_sum - tp
        pc.f1 = safe_div(2.0 * static_cast<double>(tp),
                         static_cast<double>(row_sum + col_sum));
        if (row_sum > 0) {
            macro_sum += pc.f1;
            ++macro_n;
        }
    }
    rep.macro_f1 = macro_n ? macro_sum / static_cast<double>(macro_n) : 0.0;
    return rep;
}

std::string format_report(const EvalReport& rep) {
    std::ostringstream os;
    char buf[64];
    auto pct = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
        return std::string(buf);
    };
    os << "n " << rep.n << "\n";
    os << "accuracy " << pct(rep.accuracy) << "\n";
    os << "precision " << pct(rep.precision) << "\n";
    os << "recall " << pct(rep.recall) << "\n";
    os << "f1 " << pct(rep.f1) << "\n";
    os << "macro_f1 " << pct(rep.macro_f1) << "\n";
    for (int c = 0; c < kNumClasses; ++c) {
        const char* name = label_name(static_cast<ManeuverLabel>(c));
        const PerClassMetrics& pc = rep.per_class[c];
        os << "per_class." << name << ".acc "
           << (pc.accuracy ? pct(*pc.accuracy) : std::string("undefined")) << "\n";
        os << "per_class." << name << ".f1 " << pct(pc.f1) << "\n";
    }
    os << "confusion\n";
    for (int t = 0; t < kNumClasses; ++t) {
        for (int p = 0; p < kNumClasses; ++p) {
            if (p) os << ' ';
            os << rep.confusion[t][p];
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace rip
