#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "rip/data.hpp"

namespace rip {

// Stand-in generator for the non-distributable competition data: each class
// gets a unit prototype direction and a temporal envelope (late ramp for
// turns and lane changes, decaying for slow-stop, flat for straight); frames
// are signal plus AR(1) noise, mirror views are fixed linear maps of the
// frontal latent with extra view noise.
struct GenConfig {
    std::size_t n_samples = 1000;
    std::uint32_t dim = 64;
    double fps = 2.0;
    double len_min_s = 5.0;
    double len_max_s = 30.0;
    // ST RT LT RLC LLC SS; ~75% straight/turn vs ~25% lane-change/slow-stop
    std::array<double, 6> class_dist = {0.30, 0.25, 0.20, 0.10, 0.05, 0.10};
    double noise_scale = 0.4;
    int views = 3;  // 1 = frontal only, 3 = frontal + mirrors
};

struct GenReport {
    std::array<std::size_t, 6> class_counts{};
    double probe_accuracy = 0.0;
    std::uint64_t seed = 0;
};

Dataset generate_synthetic(const GenConfig& cfg, std::uint64_t seed);

// Generates, writes the dataset plus gen_report.json into out_dir, returns
// the report.
GenReport generate_to_dir(const GenConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& out_dir);

// One-nearest-centroid classifier on mean-pooled frontal frames; the sanity
// oracle for generated datasets (chance = 1/6).
double nearest_centroid_probe(const Dataset& ds);

}  // namespace rip
