#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rip/tensor.hpp"

namespace rip {

// Compares analytic gradients against central differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every entry of every input, and returns
// the maximum relative error with denominator max(|analytic|, |numeric|, 1e-8).
// f must return a scalar and be deterministic.
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                         std::vector<Tensor> inputs, double eps = 1e-5) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }
    Tensor loss = f(inputs);
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& in : inputs) analytic.push_back(in.grad());

    double worst = 0.0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        auto& vals = inputs[p].values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            double plus, minus;
            {
                NoGradGuard ng;
                vals[i] = orig + eps;
                plus = f(inputs).value();
                vals[i] = orig - eps;
                minus = f(inputs).value();
                vals[i] = orig;
            }
            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = analytic[p][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace rip
