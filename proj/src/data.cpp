#include "rip/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "rip/error.hpp"

namespace rip {

namespace fs = std::filesystem;
using nlohmann::json;

// --- labels ------------------------------------------------------------------

const char* label_name(ManeuverLabel l) {
    switch (l) {
        case ManeuverLabel::ST: return "ST";
        case ManeuverLabel::RT: return "RT";
        case ManeuverLabel::LT: return "LT";
        case ManeuverLabel::RLC: return "RLC";
        case ManeuverLabel::LLC: return "LLC";
        case ManeuverLabel::SS: return "SS";
    }
    return "?";
}

ManeuverLabel parse_label(const std::string& s) {
    for (auto l : kAllLabels) {
        if (s == label_name(l)) return l;
    }
    throw DataError(DataError::Kind::bad_label, "unknown maneuver label '" + s + "'");
}

const FeatureSequence& Sample::view(const std::string& name) const {
    auto it = views.find(name);
    if (it == views.end()) {
        throw DataError(DataError::Kind::missing_file,
                        "sample " + id + " has no view '" + name + "'");
    }
    return it->second;
}

// --- RIPF ----------------------------------------------------------------------

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint32_t f32_bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

float bits_f32(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace

void write_ripf(const fs::path& path, const FeatureSequence& seq) {
    if (seq.frames.size() != std::size_t(seq.t) * seq.dim) {
        throw DataError(DataError::Kind::other, "feature sequence frame count mismatch");
    }
    std::vector<unsigned char> bytes;
    bytes.reserve(kRipfHeaderBytes + seq.frames.size() * 4);
    bytes.insert(bytes.end(), {'R', 'I', 'P', 'F'});
    put_u16(bytes, 1);
    put_u32(bytes, seq.t);
    put_u32(bytes, seq.dim);
    for (float f : seq.frames) put_u32(bytes, f32_bits(f));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError(DataError::Kind::other, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(DataError::Kind::other, "short write to " + path.string());
}

FeatureSequence parse_ripf(const std::vector<unsigned char>& bytes, const std::string& origin) {
    if (bytes.size() < kRipfHeaderBytes) {
        throw DataError(DataError::Kind::truncated,
                        origin + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
    }
    if (std::memcmp(bytes.data(), "RIPF", 4) != 0) {
        throw DataError(DataError::Kind::bad_magic, origin + ": bad magic");
    }
    const std::uint16_t version = get_u16(bytes.data() + 4);
    if (version != 1) {
        throw DataError(DataError::Kind::bad_version,
                        origin + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t t = get_u32(bytes.data() + 6);
    const std::uint32_t dim = get_u32(bytes.data() + 10);
    if (t == 0 || dim == 0) {
        throw DataError(DataError::Kind::dim_mismatch, origin + ": zero T or dim in header");
    }
    const std::uint64_t expected = std::uint64_t(t) * dim * 4;
    const std::uint64_t actual = bytes.size() - kRipfHeaderBytes;
    if (actual < expected) {
        throw DataError(DataError::Kind::truncated,
                        origin + ": payload has " + std::to_string(actual) + " bytes, expected " +
                            std::to_string(expected));
    }
    if (actual > expected) {
        throw DataError(DataError::Kind::trailing_bytes,
                        origin + ": " + std::to_string(actual - expected) +
                            " trailing bytes after payload");
    }
    FeatureSequence seq;
    seq.t = t;
    seq.dim = dim;
    seq.frames.resize(std::size_t(t) * dim);
    const unsigned char* p = bytes.data() + kRipfHeaderBytes;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) seq.frames[i] = bits_f32(get_u32(p + 4 * i));
    return seq;
}

FeatureSequence read_ripf(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::Kind::missing_file, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return parse_ripf(bytes, path.filename().string());
}

// --- manifest ------------------------------------------------------------------

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = fs::is_directory(dir) ? dir / "manifest.json" : dir;
    std::ifstream in(manifest_path);
    if (!in) {
        throw DataError(DataError::Kind::missing_file,
                        "cannot open manifest " + manifest_path.string());
    }
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw DataError(DataError::Kind::bad_manifest,
                        "manifest parse error: " + std::string(e.what()));
    }
    Dataset ds;
    try {
        if (m.at("format").get<std::string>() != "rip-manifest") {
            throw DataError(DataError::Kind::bad_manifest, "not a rip-manifest file");
        }
        if (m.at("version").get<int>() != 1) {
            throw DataError(DataError::Kind::bad_version, "unsupported manifest version");
        }
        ds.dim = m.at("dim").get<std::uint32_t>();
        ds.views = m.at("views").get<std::vector<std::string>>();
        const fs::path base = manifest_path.parent_path();
        for (const auto& js : m.at("samples")) {
            Sample s;
            s.id = js.at("id").get<std::string>();
            s.label = parse_label(js.at("label").get<std::string>());
            const std::uint32_t t = js.at("T").get<std::uint32_t>();
            for (const auto& v : ds.views) {
                const std::string rel = js.at("paths").at(v).get<std::string>();
                FeatureSequence seq = read_ripf(base / rel);
                if (seq.dim != ds.dim) {
                    throw DataError(DataError::Kind::dim_mismatch,
                                    "sample " + s.id + " view " + v + ": file dim " +
                                        std::to_string(seq.dim) + " != manifest dim " +
                                        std::to_string(ds.dim));
                }
                if (seq.t != t) {
                    throw DataError(DataError::Kind::dim_mismatch,
                                    "sample " + s.id + " view " + v + ": file T " +
                                        std::to_string(seq.t) + " != manifest T " +
                                        std::to_string(t));
                }
                s.views.emplace(v, std::move(seq));
            }
            ds.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw DataError(DataError::Kind::bad_manifest,
                        "malformed manifest: " + std::string(e.what()));
    }
    return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir / "features");
    json samples = json::array();
    for (const auto& s : ds.samples) {
        json js;
        js["id"] = s.id;
        js["label"] = label_name(s.label);
        js["T"] = s.views.at(ds.views.front()).t;
        json paths;
        for (const auto& v : ds.views) {
            const std::string rel = "features/" + s.id + "." + v + ".ripf";
            write_ripf(dir / rel, s.view(v));
            paths[v] = rel;
        }
        js["paths"] = paths;
        samples.push_back(js);
    }
    json m;
    m["format"] = "rip-manifest";
    m["version"] = 1;
    m["dim"] = ds.dim;
    m["views"] = ds.views;
    m["samples"] = samples;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError(DataError::Kind::other, "cannot write manifest in " + dir.string());
    out << m.dump(2) << "\n";
}

// --- normalization ----------------------------------------------------------------

NormStats fit_zscore(const std::vector<const Sample*>& train, const std::vector<std::string>& views,
                     std::uint32_t dim) {
    if (train.empty()) throw DataError(DataError::Kind::other, "fit_zscore: empty training set");
    NormStats stats;
    stats.mean.assign(dim, 0.0);
    stats.std.assign(dim, 0.0);
    std::uint64_t n = 0;
    for (const Sample* s : train) {
        for (const auto& v : views) {
            const FeatureSequence& seq = s->view(v);
            for (std::uint32_t t = 0; t < seq.t; ++t) {
                const float* row = seq.row(t);
                for (std::uint32_t j = 0; j < dim; ++j) stats.mean[j] += row[j];
            }
            n += seq.t;
        }
    }
    for (auto& v : stats.mean) v /= static_cast<double>(n);
    for (const Sample* s : train) {
        for (const auto& v : views) {
            const FeatureSequence& seq = s->view(v);
            for (std::uint32_t t = 0; t < seq.t; ++t) {
                const float* row = seq.row(t);
                for (std::uint32_t j = 0; j < dim; ++j) {
                    const double c = row[j] - stats.mean[j];
                    stats.std[j] += c * c;
                }
            }
        }
    }
    for (auto& v : stats.std) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
    return stats;
}

NormStats fit_zscore(const Dataset& train, const std::vector<std::string>& views) {
    std::vector<const Sample*> ptrs;
    ptrs.reserve(train.samples.size());
    for (const auto& s : train.samples) ptrs.push_back(&s);
    return fit_zscore(ptrs, views.empty() ? train.views : views, train.dim);
}

std::vector<double> apply_zscore(const NormStats& stats, const FeatureSequence& seq) {
    std::vector<double> out(std::size_t(seq.t) * seq.dim);
    for (std::uint32_t t = 0; t < seq.t; ++t) {
        const float* row = seq.row(t);
        double* o = out.data() + std::size_t(t) * seq.dim;
        for (std::uint32_t j = 0; j < seq.dim; ++j) o[j] = (row[j] - stats.mean[j]) / stats.std[j];
    }
    return out;
}

// --- padding -------------------------------------------------------------------------

PaddedBatch pad_batch(const std::vector<const FeatureSequence*>& seqs) {
    if (seqs.empty()) throw ShapeError("pad_batch: empty batch");
    const std::uint32_t dim = seqs[0]->dim;
    std::size_t t_max = 0;
    for (const auto* s : seqs) {
        if (s->dim != dim) throw ShapeError("pad_batch: feature dims differ");
        t_max = std::max(t_max, std::size_t(s->t));
    }
    PaddedBatch batch;
    batch.x = Tensor(Shape{seqs.size(), t_max, dim}, 0.0);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const FeatureSequence& seq = *seqs[i];
        batch.lengths.push_back(static_cast<int>(seq.t));
        double* dst = batch.x.data() + i * t_max * dim;
        for (std::size_t k = 0; k < seq.frames.size(); ++k) dst[k] = seq.frames[k];
    }
    return batch;
}

std::vector<FeatureSequence> unpad_batch(const PaddedBatch& batch) {
    const std::size_t b = batch.x.dim(0), t_max = batch.x.dim(1), dim = batch.x.dim(2);
    std::vector<FeatureSequence> out(b);
    for (std::size_t i = 0; i < b; ++i) {
        FeatureSequence& seq = out[i];
        seq.dim = static_cast<std::uint32_t>(dim);
        seq.t = static_cast<std::uint32_t>(batch.lengths[i]);
        seq.frames.resize(std::size_t(seq.t) * dim);
        const double* src = batch.x.data() + i * t_max * dim;
        for (std::size_t k = 0; k < seq.frames.size(); ++k)
            seq.frames[k] = static_cast<float>(src[k]);
    }
    return out;
}

PaddedBatch build_batch(const std::vector<const Sample*>& samples, const std::string& view,
                        const NormStats& stats) {
    if (samples.empty()) throw ShapeError("build_batch: empty batch");
    std::size_t t_max = 0;
    const std::uint32_t dim = samples[0]->view(view).dim;
    for (const Sample* s : samples) t_max = std::max(t_max, std::size_t(s->view(view).t));
    PaddedBatch batch;
    batch.x = Tensor(Shape{samples.size(), t_max, dim}, 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const FeatureSequence& seq = samples[i]->view(view);
        batch.lengths.push_back(static_cast<int>(seq.t));
        std::vector<double> normed = apply_zscore(stats, seq);
        double* dst = batch.x.data() + i * t_max * dim;
        std::copy(normed.begin(), normed.end(), dst);
    }
    return batch;
}

// --- splitting ------------------------------------------------------------------------

SplitIndices split_dataset(const Dataset& ds, const std::array<double, 3>& ratios,
                           std::uint64_t seed, bool stratified) {
    double total = ratios[0] + ratios[1] + ratios[2];
    if (std::fabs(total - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(total));
    }
    Rng rng = Rng::stream(seed, "split");

    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        groups.assign(kNumClasses, {});
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            groups[label_code(ds.samples[i].label)].push_back(i);
        }
    } else {
        groups.emplace_back();
        for (std::size_t i = 0; i < ds.samples.size(); ++i) groups[0].push_back(i);
    }

    SplitIndices out;
    std::vector<std::size_t>* dests[3] = {&out.train, &out.val, &out.test};
    for (auto& group : groups) {
        if (group.empty()) continue;
        rng.shuffle(group);
        const std::size_t n = group.size();
        std::array<std::size_t, 3> counts{};
        std::array<double, 3> frac{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = static_cast<double>(n) * ratios[s];
            counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-12));
            frac[s] = exact - static_cast<double>(counts[s]);
            assigned += counts[s];
        }
        // largest remainder, ties resolved toward the earlier split
        std::array<int, 3> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return frac[a] > frac[b]; });
        for (std::size_t k = 0; assigned < n; ++k) {
            ++counts[order[k % 3]];
            ++assigned;
        }
        std::size_t cursor = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < counts[s]; ++k) dests[s]->push_back(group[cursor++]);
        }
    }
    for (int s = 0; s < 3; ++s) std::sort(dests[s]->begin(), dests[s]->end());
    return out;
}

std::vector<const Sample*> select(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<const Sample*> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(&ds.samples[i]);
    return out;
}

}  // namespace rip
