#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rip/data.hpp"
#include "rip/smote.hpp"

namespace rip {

// exp(-gamma * ||x - y||^2)
double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma);
double rbf_kernel(const double* x, const double* y, std::size_t d, double gamma);

struct BinarySvm {
    Matrix support_vectors;
    std::vector<double> coef;  // alpha_i * y_i per support vector
    double bias = 0.0;
    double gamma = 1.0;

    double decision(const double* x) const;
};

struct SmoSettings {
    double c = 1.0;
    double gamma = 1.0;
    double tol = 1e-3;
    std::size_t max_passes = 2000;
};

struct SmoResult {
    BinarySvm machine;
    std::vector<double> alpha;  // full alpha vector over training rows
    double bias = 0.0;
    bool converged = false;
    std::size_t kkt_violations = 0;  // violations beyond tol at termination
    std::size_t passes = 0;
};

// Two-variable SMO on the dual: first-violator outer loop, max-|E_i - E_j|
// working partner. y must contain both +1 and -1.
SmoResult train_binary_svm(const Matrix& x, const std::vector<int>& y, const SmoSettings& s);

// dual objective W(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
double svm_dual_objective(const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& alpha, double gamma);

// --- one-vs-rest multiclass -----------------------------------------------------

struct SvmTaskConfig {
    std::size_t k_frames = 16;
    double c = 1.0;
    double gamma = 0.0;  // 0 = scale heuristic 1/(d * var(X))
    std::size_t smote_k = 5;
    double tol = 1e-3;
    std::size_t max_passes = 2000;
};

struct OvrSvmModel {
    std::array<BinarySvm, 6> machines;
    NormStats norm;  // fitted on the flattened training design matrix
    std::vector<std::string> views;
    std::size_t k_frames = 16;
    double gamma = 1.0;
    double c = 1.0;
    bool fitted = false;

    std::array<double, 6> decisions(const double* x) const;
    // argmax of decision values; ties break toward the lower class index
    ManeuverLabel predict(const std::vector<double>& features) const;
};

struct SvmTrainOutcome {
    OvrSvmModel model;
    ResampleReport resample;
    std::array<std::size_t, 6> kkt_violations{};
    std::array<bool, 6> converged{};
    double train_accuracy = 0.0;
};

// Per-sample feature vector: shared sampled frame indices across views, then
// per-view flat vectors concatenated. The sampling stream is derived from
// (seed, sample id) so it does not depend on sample order.
std::vector<double> svm_sample_features(const Sample& sample, const std::vector<std::string>& views,
                                        std::size_t k_frames, std::uint64_t seed);

SvmTrainOutcome train_ovr_svm(const std::vector<const Sample*>& train,
                              const std::vector<std::string>& views, const SvmTaskConfig& cfg,
                              std::uint64_t seed);

std::vector<ManeuverLabel> svm_predict(const OvrSvmModel& model,
                                       const std::vector<const Sample*>& samples,
                                       std::uint64_t seed);

}  // namespace rip
