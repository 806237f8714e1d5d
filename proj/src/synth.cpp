#include "rip/synth.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "rip/error.hpp"

namespace rip {

namespace {

using nlohmann::json;

double envelope(ManeuverLabel label, double tau) {
    switch (label) {
        case ManeuverLabel::ST: return 1.0;
        case ManeuverLabel::SS: return std::exp(-2.0 * tau);
        default: return tau * tau;  // turns and lane changes ramp up late
    }
}

std::vector<double> unit_direction(std::uint32_t dim, Rng& rng) {
    std::vector<double> u(dim);
    double norm = 0.0;
    for (auto& v : u) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;
    return u;
}

}  // namespace

Dataset generate_synthetic(const GenConfig& cfg, std::uint64_t seed) {
    double dist_sum = 0.0;
    for (double p : cfg.class_dist) dist_sum += p;
    if (std::fabs(dist_sum - 1.0) > 1e-9) {
        throw ConfigError("class distribution must sum to 1, got " + std::to_string(dist_sum));
    }
    if (cfg.n_samples == 0 || cfg.dim == 0) throw ConfigError("n_samples and dim must be positive");
    if (cfg.views != 1 && cfg.views != 3) throw ConfigError("views must be 1 or 3");
    if (cfg.len_min_s <= 0 || cfg.len_max_s < cfg.len_min_s || cfg.fps <= 0) {
        throw ConfigError("invalid length range or fps");
    }

    Dataset ds;
    ds.dim = cfg.dim;
    ds.views = cfg.views == 1 ? std::vector<std::string>{"front"}
                              : std::vector<std::string>{"front", "left", "right"};

    // class prototypes and fixed mirror maps
    Rng proto_rng = Rng::stream(seed, "prototypes");
    std::array<std::vector<double>, 6> proto;
    for (int c = 0; c < kNumClasses; ++c) proto[c] = unit_direction(cfg.dim, proto_rng);
    const double map_scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::vector<double> map_left(std::size_t(cfg.dim) * cfg.dim);
    std::vector<double> map_right(std::size_t(cfg.dim) * cfg.dim);
    if (cfg.views == 3) {
        for (auto& v : map_left) v = proto_rng.normal() * map_scale;
        for (auto& v : map_right) v = proto_rng.normal() * map_scale;
    }

    // labels/lengths and frame noise use independent streams so the class mix
    // for a seed does not depend on dim or fps
    Rng meta_rng = Rng::stream(seed, "labels");
    Rng rng = Rng::stream(seed, "noise");
    const double rho = 0.8;  // AR(1) coefficient
    const double innov = cfg.noise_scale * std::sqrt(1.0 - rho * rho);

    std::vector<double> latent(cfg.dim), mapped(cfg.dim);
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        Sample s;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%05zu", i);
        s.id = buf;
        const double draw = meta_rng.uniform();
        double cum = 0.0;
        int cls = kNumClasses - 1;
        for (int c = 0; c < kNumClasses; ++c) {
            cum += cfg.class_dist[c];
            if (draw < cum) {
                cls = c;
                break;
            }
        }
        s.label = static_cast<ManeuverLabel>(cls);
        const double seconds = meta_rng.uniform(cfg.len_min_s, cfg.len_max_s);
        const std::uint32_t t_len =
            std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(seconds * cfg.fps)));

        std::map<std::string, FeatureSequence> views;
        for (const auto& name : ds.views) {
            FeatureSequence seq;
            seq.dim = cfg.dim;
            seq.t = t_len;
            seq.frames.resize(std::size_t(t_len) * cfg.dim);
            views.emplace(name, std::move(seq));
        }

        // per-view AR(1) noise states
        std::map<std::string, std::vector<double>> noise;
        for (const auto& name : ds.views) noise[name].assign(cfg.dim, 0.0);

        // lane changes light up the matching mirror
        double amp_left = 1.0, amp_right = 1.0;
        if (s.label == ManeuverLabel::LLC) amp_left = 2.0;
        if (s.label == ManeuverLabel::RLC) amp_right = 2.0;

        for (std::uint32_t t = 0; t < t_len; ++t) {
            const double tau = t_len == 1 ? 1.0 : static_cast<double>(t) / (t_len - 1.0);
            const double g = envelope(s.label, tau);
            for (std::uint32_t j = 0; j < cfg.dim; ++j) latent[j] = g * proto[cls][j];

            for (const auto& name : ds.views) {
                auto& state = noise[name];
                FeatureSequence& seq = views[name];
                float* row = seq.frames.data() + std::size_t(t) * cfg.dim;
                const double* signal = latent.data();
                double amp = 1.0;
                if (name != "front") {
                    const auto& map = name == "left" ? map_left : map_right;
                    amp = name == "left" ? amp_left : amp_right;
                    for (std::uint32_t j = 0; j < cfg.dim; ++j) {
                        double acc = 0.0;
                        const double* mrow = map.data() + std::size_t(j) * cfg.dim;
                        for (std::uint32_t k = 0; k < cfg.dim; ++k) acc += mrow[k] * latent[k];
                        mapped[j] = acc;
                    }
                    signal = mapped.data();
                }
                for (std::uint32_t j = 0; j < cfg.dim; ++j) {
                    state[j] = rho * state[j] + innov * rng.normal();
                    row[j] = static_cast<float>(amp * signal[j] + state[j]);
                }
            }
        }
        s.views = std::move(views);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

double nearest_centroid_probe(const Dataset& ds) {
    const std::uint32_t dim = ds.dim;
    std::array<std::vector<double>, 6> centroid;
    std::array<std::size_t, 6> count{};
    for (auto& c : centroid) c.assign(dim, 0.0);

    std::vector<std::vector<double>> pooled(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const FeatureSequence& seq = ds.samples[i].view("front");
        std::vector<double> mean(dim, 0.0);
        for (std::uint32_t t = 0; t < seq.t; ++t) {
            const float* row = seq.row(t);
            for (std::uint32_t j = 0; j < dim; ++j) mean[j] += row[j];
        }
        for (auto& v : mean) v /= seq.t;
        const int c = label_code(ds.samples[i].label);
        for (std::uint32_t j = 0; j < dim; ++j) centroid[c][j] += mean[j];
        ++count[c];
        pooled[i] = std::move(mean);
    }
    for (int c = 0; c < kNumClasses; ++c) {
        if (count[c] == 0) continue;
        for (auto& v : centroid[c]) v /= static_cast<double>(count[c]);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        double best = 0.0;
        int best_c = -1;
        for (int c = 0; c < kNumClasses; ++c) {
            if (count[c] == 0) continue;
            double d2 = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                const double diff = pooled[i][j] - centroid[c][j];
                d2 += diff * diff;
            }
            if (best_c < 0 || d2 < best) {
                best = d2;
                best_c = c;
            }
        }
        if (best_c == label_code(ds.samples[i].label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

GenReport generate_to_dir(const GenConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& out_dir) {
    Dataset ds = generate_synthetic(cfg, seed);
    write_dataset(out_dir, ds);

    GenReport report;
    report.seed = seed;
    for (const auto& s : ds.samples) ++report.class_counts[label_code(s.label)];
    report.probe_accuracy = nearest_centroid_probe(ds);

    json j;
    j["seed"] = seed;
    j["n_samples"] = cfg.n_samples;
    j["dim"] = cfg.dim;
    j["fps"] = cfg.fps;
    j["len_min_s"] = cfg.len_min_s;
    j["len_max_s"] = cfg.len_max_s;
    j["noise_scale"] = cfg.noise_scale;
    j["views"] = cfg.views;
    json counts;
    for (int c = 0; c < kNumClasses; ++c) {
        counts[label_name(static_cast<ManeuverLabel>(c))] = report.class_counts[c];
    }
    j["class_counts"] = counts;
    json dist;
    for (int c = 0; c < kNumClasses; ++c) {
        dist[label_name(static_cast<ManeuverLabel>(c))] = cfg.class_dist[c];
    }
    j["class_dist"] = dist;
    j["probe_accuracy"] = report.probe_accuracy;
    std::ofstream out(out_dir / "gen_report.json", std::ios::trunc);
    out << j.dump(2) << "\n";
    return report;
}

}  // namespace rip
