#include "rip/svm.hpp"

#include <algorithm>
#include <cmath>

#include "rip/error.hpp"
#include "rip/parallel.hpp"

namespace rip {

double rbf_kernel(const double* x, const double* y, std::size_t d, double gamma) {
    if (gamma < 0.0) throw ConfigError("rbf_kernel: gamma must be nonnegative");
    double d2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - y[j];
        d2 += diff * diff;
    }
    return std::exp(-gamma * d2);
}

double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma) {
    if (x.size() != y.size()) {
        throw ShapeError("rbf_kernel: length mismatch " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    }
    return rbf_kernel(x.data(), y.data(), x.size(), gamma);
}

double BinarySvm::decision(const double* x) const {
    double acc = bias;
    for (std::size_t i = 0; i < support_vectors.rows; ++i) {
        acc += coef[i] * rbf_kernel(support_vectors.row(i), x, support_vectors.cols, gamma);
    }
    return acc;
}

namespace {

// full kernel matrix; n stays small enough at desk scale (<= ~1200 rows)
std::vector<double> kernel_matrix(const Matrix& x, double gamma) {
    const std::size_t n = x.rows;
    std::vector<double> k(n * n);
    parallel_for(n, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = rbf_kernel(x.row(i), x.row(j), x.cols, gamma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
    });
    return k;
}

}  // namespace

SmoResult train_binary_svm(const Matrix& x, const std::vector<int>& y, const SmoSettings& s) {
    const std::size_t n = x.rows;
    if (n == 0 || y.size() != n) throw ShapeError("train_binary_svm: bad training set");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw ConfigError("train_binary_svm: labels must be +1/-1");
    }
    if (!has_pos || !has_neg) {
        throw DataError(DataError::Kind::other, "train_binary_svm: single-class input");
    }

    const std::vector<double> k = kernel_matrix(x, s.gamma);
    std::vector<double> alpha(n, 0.0);
    std::vector<double> f(n, 0.0);  // f_i = sum_j alpha_j y_j K_ij + b
    double b = 0.0;

    auto violates = [&](std::size_t i) {
        const double e = f[i] - y[i];
        const double ye = y[i] * e;
        return (ye < -s.tol && alpha[i] < s.c) || (ye > s.tol && alpha[i] > 0.0);
    };

    // one two-variable update; returns false when the pair cannot move
    auto try_pair = [&](std::size_t i, std::size_t j) {
        if (i == j) return false;
        const double ei = f[i] - y[i];
        const double ej = f[j] - y[j];
        const double ai_old = alpha[i], aj_old = alpha[j];
        double lo, hi;
        if (y[i] != y[j]) {
            lo = std::max(0.0, aj_old - ai_old);
            hi = std::min(s.c, s.c + aj_old - ai_old);
        } else {
            lo = std::max(0.0, ai_old + aj_old - s.c);
            hi = std::min(s.c, ai_old + aj_old);
        }
        if (lo >= hi) return false;
        const double eta = k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j];
        if (eta <= 0.0) return false;
        double aj = aj_old + y[j] * (ei - ej) / eta;
        aj = std::clamp(aj, lo, hi);
        if (std::fabs(aj - aj_old) < 1e-14) return false;
        const double ai = ai_old + y[i] * y[j] * (aj_old - aj);
        const double di = (ai - ai_old) * y[i];
        const double dj = (aj - aj_old) * y[j];
        const double b1 = b - ei - di * k[i * n + i] - dj * k[i * n + j];
        const double b2 = b - ej - di * k[i * n + j] - dj * k[j * n + j];
        double b_new;
        if (ai > 0.0 && ai < s.c) {
            b_new = b1;
        } else if (aj > 0.0 && aj < s.c) {
            b_new = b2;
        } else {
            b_new = 0.5 * (b1 + b2);
        }
        const double db = b_new - b;
        alpha[i] = ai;
        alpha[j] = aj;
        b = b_new;
        for (std::size_t r = 0; r < n; ++r) f[r] += di * k[i * n + r] + dj * k[j * n + r] + db;
        return true;
    };

    // incremental f drifts over many updates; rebuild exactly from alpha
    auto refresh_f = [&] {
        for (std::size_t r = 0; r < n; ++r) {
            double acc = b;
            const double* kr = k.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) {
                if (alpha[j] != 0.0) acc += alpha[j] * y[j] * kr[j];
            }
            f[r] = acc;
        }
    };

    // per-point admissible intercept target t_i = y_i - raw_i; the dual is
    // optimal within tol iff max over I_up <= min over I_low + 2 tol
    struct Gap {
        double lo = -1e300, hi = 1e300;
        std::size_t lo_idx = 0, hi_idx = 0;
        bool converged(double tol) const { return lo <= hi + 2.0 * tol; }
    };
    auto pair_gap = [&]() {
        Gap gap;
        for (std::size_t i = 0; i < n; ++i) {
            const double target = y[i] - (f[i] - b);
            const bool at_zero = alpha[i] <= 1e-12;
            const bool at_c = alpha[i] >= s.c - 1e-12;
            const bool in_up = (y[i] == 1 && !at_c) || (y[i] == -1 && !at_zero);
            const bool in_low = (y[i] == 1 && !at_zero) || (y[i] == -1 && !at_c);
            if (in_up && target > gap.lo) {
                gap.lo = target;
                gap.lo_idx = i;
            }
            if (in_low && target < gap.hi) {
                gap.hi = target;
                gap.hi_idx = i;
            }
        }
        return gap;
    };

    std::size_t pass = 0;
    bool converged = false;
    while (pass < s.max_passes) {
        ++pass;
        if (pass % 32 == 0) refresh_f();
        std::size_t changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!violates(i)) continue;
            const double ei = f[i] - y[i];
            // preferred partner: largest |E_i - E_j|
            std::size_t j = n;
            double best = -1.0;
            for (std::size_t cand = 0; cand < n; ++cand) {
                if (cand == i) continue;
                const double gap = std::fabs(ei - (f[cand] - y[cand]));
                if (gap > best) {
                    best = gap;
                    j = cand;
                }
            }
            bool moved = j != n && try_pair(i, j);
            // fall back to a deterministic scan when the preferred pair is stuck
            for (std::size_t cand = 0; !moved && cand < n; ++cand) {
                if (cand == j) continue;
                moved = try_pair(i, cand);
            }
            if (moved) ++changed;
        }
        if (changed == 0) {
            refresh_f();
            Gap gap = pair_gap();
            if (gap.converged(s.tol)) {
                converged = true;
                break;
            }
            // the heuristic sweep stalled: push the maximal violating pair
            if (!try_pair(gap.lo_idx, gap.hi_idx)) break;
        }
    }
    if (!converged) {
        refresh_f();
        converged = pair_gap().converged(s.tol);
    }

    // final intercept: free-vector average clamped into the admissible band
    {
        refresh_f();
        Gap gap = pair_gap();
        double free_sum = 0.0;
        std::size_t free_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] > 1e-12 && alpha[i] < s.c - 1e-12) {
                free_sum += y[i] - (f[i] - b);
                ++free_count;
            }
        }
        // sit strictly inside the band so rounding cannot push a free vector
        // onto the tolerance edge
        const double pad = 1e-3 * s.tol;
        const double band_lo = gap.lo - s.tol + pad;
        const double band_hi = gap.hi + s.tol - pad;
        double b_new;
        if (free_count > 0) {
            b_new = free_sum / static_cast<double>(free_count);
        } else {
            b_new = 0.5 * (gap.lo + gap.hi);
        }
        if (band_lo <= band_hi) b_new = std::clamp(b_new, band_lo, band_hi);
        b = b_new;
    }

    refresh_f();
    SmoResult result;
    result.alpha = alpha;
    result.bias = b;
    result.converged = converged;
    result.passes = pass;
    for (std::size_t i = 0; i < n; ++i) {
        const double yf = y[i] * f[i];
        const bool at_zero = alpha[i] <= 1e-12;
        const bool at_c = alpha[i] >= s.c - 1e-12;
        const bool bad = at_zero  ? yf < 1.0 - s.tol
                         : at_c  ? yf > 1.0 + s.tol
                                 : std::fabs(yf - 1.0) > s.tol;
        if (bad) ++result.kkt_violations;
    }
    result.machine.gamma = s.gamma;
    result.machine.bias = b;
    result.machine.support_vectors = Matrix(0, x.cols);
    std::vector<double> row(x.cols);
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 1e-12) {
            std::copy(x.row(i), x.row(i) + x.cols, row.begin());
            result.machine.support_vectors.append_row(row);
            result.machine.coef.push_back(alpha[i] * y[i]);
        }
    }
    return result;
}

double svm_dual_objective(const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& alpha, double gamma) {
    const std::size_t n = x.rows;
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) obj += alpha[i];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (alpha[i] == 0.0 || alpha[j] == 0.0) continue;
            obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] *
                   rbf_kernel(x.row(i), x.row(j), x.cols, gamma);
        }
    }
    return obj;
}

// --- one-vs-rest ---------------------------------------------------------------

std::array<double, 6> OvrSvmModel::decisions(const double* x) const {
    std::array<double, 6> out{};
    for (int c = 0; c < kNumClasses; ++c) out[c] = machines[c].decision(x);
    return out;
}

ManeuverLabel OvrSvmModel::predict(const std::vector<double>& features) const {
    if (!fitted) throw Error("ovr_predict: model is not fitted");
    const auto d = decisions(features.data());
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
        if (d[c] > d[best]) best = c;
    }
    return static_cast<ManeuverLabel>(best);
}

std::vector<double> svm_sample_features(const Sample& sample, const std::vector<std::string>& views,
                                        std::size_t k_frames, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "frames:" + sample.id);
    const FeatureSequence& front = sample.view(views.front());
    const auto idx = sample_frame_indices(front.t, k_frames, rng);
    std::vector<double> out;
    out.reserve(views.size() * k_frames * front.dim);
    for (const auto& v : views) {
        const auto part = gather_frames(sample.view(v), idx);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

namespace {

void normalize_rows(Matrix& x, const NormStats& stats) {
    for (std::size_t r = 0; r < x.rows; ++r) {
        double* row = x.row(r);
        for (std::size_t j = 0; j < x.cols; ++j) row[j] = (row[j] - stats.mean[j]) / stats.std[j];
    }
}

NormStats fit_matrix_stats(const Matrix& x) {
    NormStats stats;
    stats.mean.assign(x.cols, 0.0);
    stats.std.assign(x.cols, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* row = x.row(r);
        for (std::size_t j = 0; j < x.cols; ++j) stats.mean[j] += row[j];
    }
    for (auto& v : stats.mean) v /= static_cast<double>(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* row = x.row(r);
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double c = row[j] - stats.mean[j];
            stats.std[j] += c * c;
        }
    }
    for (auto& v : stats.std) v = std::max(std::sqrt(v / static_cast<double>(x.rows)), 1e-8);
    return stats;
}

double scale_gamma(const Matrix& x) {
    // 1 / (d * var(X)) over all entries
    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.data.size());
    double var = 0.0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.data.size());
    if (var < 1e-12) var = 1.0;
    return 1.0 / (static_cast<double>(x.cols) * var);
}

}  // namespace

SvmTrainOutcome train_ovr_svm(const std::vector<const Sample*>& train,
                              const std::vector<std::string>& views, const SvmTaskConfig& cfg,
                              std::uint64_t seed) {
    if (train.empty()) throw ConfigError("train_ovr_svm: empty training set");
    Matrix x;
    std::vector<int> y;
    for (const Sample* s : train) {
        x.append_row(svm_sample_features(*s, views, cfg.k_frames, seed));
        y.push_back(label_code(s->label));
    }

    SvmTrainOutcome out;
    out.model.norm = fit_matrix_stats(x);
    normalize_rows(x, out.model.norm);

    Rng smote_rng = Rng::stream(seed, "smote");
    out.resample = smote(x, y, cfg.smote_k, smote_rng);

    const double gamma = cfg.gamma > 0.0 ? cfg.gamma : scale_gamma(x);
    out.model.gamma = gamma;
    out.model.c = cfg.c;
    out.model.views = views;
    out.model.k_frames = cfg.k_frames;

    SmoSettings smo;
    smo.c = cfg.c;
    smo.gamma = gamma;
    smo.tol = cfg.tol;
    smo.max_passes = cfg.max_passes;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<int> yc(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) yc[i] = y[i] == c ? 1 : -1;
        SmoResult res = train_binary_svm(x, yc, smo);
        out.model.machines[c] = std::move(res.machine);
        out.kkt_violations[c] = res.kkt_violations;
        out.converged[c] = res.converged;
    }
    out.model.fitted = true;

    // training accuracy on the original (pre-SMOTE) rows
    std::size_t hits = 0;
    std::vector<double> row(x.cols);
    for (std::size_t i = 0; i < train.size(); ++i) {
        std::copy(x.row(i), x.row(i) + x.cols, row.begin());
        const auto d = out.model.decisions(row.data());
        int best = 0;
        for (int c = 1; c < kNumClasses; ++c) {
            if (d[c] > d[best]) best = c;
        }
        if (best == label_code(train[i]->label)) ++hits;
    }
    out.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    return out;
}

std::vector<ManeuverLabel> svm_predict(const OvrSvmModel& model,
                                       const std::vector<const Sample*>& samples,
                                       std::uint64_t seed) {
    if (!model.fitted) throw Error("svm_predict: model is not fitted");
    std::vector<ManeuverLabel> out;
    out.reserve(samples.size());
    for (const Sample* s : samples) {
        std::vector<double> feats = svm_sample_features(*s, model.views, model.k_frames, seed);
        if (feats.size() != model.norm.mean.size()) {
            throw DataError(DataError::Kind::incompatible,
                            "sample " + s->id + " yields " + std::to_string(feats.size()) +
                                " features, model expects " +
                                std::to_string(model.norm.mean.size()));
        }
        for (std::size_t j = 0; j < feats.size(); ++j) {
            feats[j] = (feats[j] - model.norm.mean[j]) / model.norm.std[j];
        }
        out.push_back(model.predict(feats));
    }
    return out;
}

}  // namespace rip
