#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "rip/data.hpp"
#include "rip/rng.hpp"

namespace rip {

// Simple row-major design matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    void append_row(const std::vector<double>& v);
};

// k distinct frame indices when T >= k (uniform without replacement), with
// replacement otherwise; always returned ascending.
std::vector<std::uint32_t> sample_frame_indices(std::uint32_t t, std::size_t k, Rng& rng);

// Concatenation of the selected frames, in index order.
std::vector<double> gather_frames(const FeatureSequence& seq,
                                  const std::vector<std::uint32_t>& idx);

// Frame-level random sampling to a fixed-size flat vector of length k*dim.
std::vector<double> random_frame_sample(const FeatureSequence& seq, std::size_t k, Rng& rng);

struct SyntheticProvenance {
    std::size_t parent;    // row index into the original matrix
    std::size_t neighbor;  // row index into the original matrix
    double u;              // interpolation coefficient in [0,1]
};

struct ResampleReport {
    std::map<int, std::size_t> before;
    std::map<int, std::size_t> after;
    std::vector<SyntheticProvenance> synthetic;  // one per appended row, in order
};

// Balances every class up to the majority count by interpolating minority
// rows toward one of their k nearest same-class neighbors. Originals are
// preserved verbatim; synthetic rows are appended (classes in label order).
ResampleReport smote(Matrix& x, std::vector<int>& y, std::size_t k_neighbors, Rng& rng);

}  // namespace rip
