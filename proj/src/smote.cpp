#include "rip/smote.hpp"

#include <algorithm>
#include <cmath>

#include "rip/error.hpp"

namespace rip {

void Matrix::append_row(const std::vector<double>& v) {
    if (cols == 0) cols = v.size();
    if (v.size() != cols) throw ShapeError("Matrix::append_row: width mismatch");
    data.insert(data.end(), v.begin(), v.end());
    ++rows;
}

std::vector<std::uint32_t> sample_frame_indices(std::uint32_t t, std::size_t k, Rng& rng) {
    if (t == 0) throw DataError(DataError::Kind::other, "random_frame_sample: empty sequence");
    if (k == 0) throw ConfigError("random_frame_sample: k must be >= 1");
    std::vector<std::uint32_t> idx;
    idx.reserve(k);
    if (t >= k) {
        std::vector<std::uint32_t> all(t);
        for (std::uint32_t i = 0; i < t; ++i) all[i] = i;
        // partial Fisher-Yates: first k entries are a uniform sample
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(t - i));
            std::swap(all[i], all[j]);
        }
        idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        for (std::size_t i = 0; i < k; ++i) idx.push_back(static_cast<std::uint32_t>(rng.below(t)));
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> gather_frames(const FeatureSequence& seq,
                                  const std::vector<std::uint32_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size() * seq.dim);
    for (auto i : idx) {
        const float* row = seq.row(i);
        for (std::uint32_t j = 0; j < seq.dim; ++j) out.push_back(row[j]);
    }
    return out;
}

std::vector<double> random_frame_sample(const FeatureSequence& seq, std::size_t k, Rng& rng) {
    return gather_frames(seq, sample_frame_indices(seq.t, k, rng));
}

ResampleReport smote(Matrix& x, std::vector<int>& y, std::size_t k_neighbors, Rng& rng) {
    if (x.rows != y.size()) throw ShapeError("smote: one label per row");
    if (x.rows == 0) throw ShapeError("smote: empty input");
    if (k_neighbors == 0) throw ConfigError("smote: k_neighbors must be >= 1");

    ResampleReport report;
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < x.rows; ++i) by_class[y[i]].push_back(i);
    std::size_t majority = 0;
    for (auto& [label, rows] : by_class) {
        report.before[label] = rows.size();
        majority = std::max(majority, rows.size());
    }

    const std::size_t d = x.cols;
    std::vector<double> buf(d);
    for (auto& [label, rows] : by_class) {
        const std::size_t need = majority - rows.size();
        report.after[label] = majority;
        if (need == 0) continue;
        if (rows.size() < 2) {
            throw DataError(DataError::Kind::other,
                            "smote: class " + std::to_string(label) +
                                " has a single row, cannot interpolate");
        }
        // neighbor lists over the original same-class rows
        const std::size_t k_eff = std::min(k_neighbors, rows.size() - 1);
        std::vector<std::vector<std::size_t>> neighbors(rows.size());
        std::vector<std::pair<double, std::size_t>> dist;
        for (std::size_t a = 0; a < rows.size(); ++a) {
            dist.clear();
            for (std::size_t b = 0; b < rows.size(); ++b) {
                if (a == b) continue;
                double d2 = 0.0;
                const double* ra = x.row(rows[a]);
                const double* rb = x.row(rows[b]);
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = ra[j] - rb[j];
                    d2 += diff * diff;
                }
                dist.emplace_back(d2, rows[b]);
            }
            std::stable_sort(dist.begin(), dist.end(),
                             [](const auto& p, const auto& q) { return p.first < q.first; });
            for (std::size_t k = 0; k < k_eff; ++k) neighbors[a].push_back(dist[k].second);
        }
        for (std::size_t s = 0; s < need; ++s) {
            const std::size_t pick = static_cast<std::size_t>(rng.below(rows.size()));
            const std::size_t parent = rows[pick];
            const std::size_t nn = neighbors[pick][static_cast<std::size_t>(rng.below(k_eff))];
            const double u = rng.uniform();
            const double* xp = x.row(parent);
            const double* xn = x.row(nn);
            for (std::size_t j = 0; j < d; ++j) buf[j] = xp[j] + u * (xn[j] - xp[j]);
            x.append_row(buf);
            y.push_back(label);
            report.synthetic.push_back(SyntheticProvenance{parent, nn, u});
        }
    }
    return report;
}

}  // namespace rip
