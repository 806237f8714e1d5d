#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rip/rng.hpp"
#include "rip/tensor.hpp"

namespace rip {

// --- labels ------------------------------------------------------------------

// Fixed integer codes 0-5; ST is the designated "driving straight" class.
enum class ManeuverLabel : int { ST = 0, RT = 1, LT = 2, RLC = 3, LLC = 4, SS = 5 };

constexpr int kNumClasses = 6;
constexpr std::array<ManeuverLabel, 6> kAllLabels = {
    ManeuverLabel::ST,  ManeuverLabel::RT,  ManeuverLabel::LT,
    ManeuverLabel::RLC, ManeuverLabel::LLC, ManeuverLabel::SS};

const char* label_name(ManeuverLabel l);
ManeuverLabel parse_label(const std::string& s);  // DataError(bad_label) on unknown strings
inline int label_code(ManeuverLabel l) { return static_cast<int>(l); }
inline bool is_maneuver(ManeuverLabel l) { return l != ManeuverLabel::ST; }

// --- core containers ------------------------------------------------------------

// Per-view time series of per-frame embedding vectors; 32-bit storage.
struct FeatureSequence {
    std::uint32_t dim = 0;
    std::uint32_t t = 0;
    std::vector<float> frames;  // row-major [t, dim]

    const float* row(std::uint32_t i) const { return frames.data() + std::size_t(i) * dim; }
};

struct Sample {
    std::string id;
    ManeuverLabel label = ManeuverLabel::ST;
    std::map<std::string, FeatureSequence> views;  // front / left / right

    const FeatureSequence& view(const std::string& name) const;
};

struct Dataset {
    std::uint32_t dim = 0;
    std::vector<std::string> views;  // present views, e.g. {front,left,right}
    std::vector<Sample> samples;
};

inline const std::array<std::string, 3> kViewNames = {"front", "left", "right"};

// --- RIPF feature file -----------------------------------------------------------
// magic "RIPF", u16 version=1, u32 T, u32 dim, then T*dim little-endian f32,
// row-major. Header is exactly 14 bytes.

constexpr std::size_t kRipfHeaderBytes = 14;

void write_ripf(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_ripf(const std::filesystem::path& path);
FeatureSequence parse_ripf(const std::vector<unsigned char>& bytes, const std::string& origin);

// --- manifest-backed dataset ------------------------------------------------------

// dir must contain manifest.json; every referenced feature file is validated
// against the manifest (dim, T, label string).
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

// --- normalization -----------------------------------------------------------------

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;  // floored at 1e-8
};

// Pooled over all frames of the listed views of every sample (training data
// only, by contract). Empty view list means every view in the dataset.
NormStats fit_zscore(const Dataset& train, const std::vector<std::string>& views = {});
NormStats fit_zscore(const std::vector<const Sample*>& train, const std::vector<std::string>& views,
                     std::uint32_t dim);

// (x - mean) / std per dimension, computed in f64
std::vector<double> apply_zscore(const NormStats& stats, const FeatureSequence& seq);

// --- padding -------------------------------------------------------------------------

struct PaddedBatch {
    Tensor x;  // [B, Tmax, dim]
    std::vector<int> lengths;
};

PaddedBatch pad_batch(const std::vector<const FeatureSequence*>& seqs);
std::vector<FeatureSequence> unpad_batch(const PaddedBatch& batch);

// Normalized padded batch for one view of a sample list.
PaddedBatch build_batch(const std::vector<const Sample*>& samples, const std::string& view,
                        const NormStats& stats);

// --- splitting ------------------------------------------------------------------------

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Stratified per class with largest-remainder rounding; deterministic in seed.
SplitIndices split_dataset(const Dataset& ds, const std::array<double, 3>& ratios,
                           std::uint64_t seed, bool stratified = true);

std::vector<const Sample*> select(const Dataset& ds, const std::vector<std::size_t>& idx);

}  // namespace rip
