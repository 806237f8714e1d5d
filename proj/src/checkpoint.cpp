#include "rip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "rip/error.hpp"

namespace rip {

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) {
            throw DataError(DataError::Kind::truncated, "checkpoint: unexpected end of file");
        }
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

const Blob& Checkpoint::find(const std::string& name) const {
    for (const auto& b : blobs) {
        if (b.name == name) return b;
    }
    throw DataError(DataError::Kind::incompatible, "checkpoint is missing blob '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& b : blobs) {
        if (b.name == name) return true;
    }
    return false;
}

std::uint16_t method_id(const std::string& method) {
    if (method == "mamba2") return 1;
    if (method == "svm") return 2;
    if (method == "cnn_lstm") return 3;
    if (method == "baseline") return 4;
    throw ConfigError("unknown method '" + method + "'");
}

std::string method_name_of(std::uint16_t id) {
    switch (id) {
        case 1: return "mamba2";
        case 2: return "svm";
        case 3: return "cnn_lstm";
        case 4: return "baseline";
    }
    throw DataError(DataError::Kind::incompatible,
                    "unknown method id " + std::to_string(id) + " in checkpoint");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::vector<unsigned char> out;
    out.insert(out.end(), {'R', 'I', 'P', 'M'});
    put_u16(out, 1);
    put_u16(out, ckpt.method_id);
    put_u32(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
    out.insert(out.end(), ckpt.config_json.begin(), ckpt.config_json.end());
    put_u32(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& blob : ckpt.blobs) {
        put_u16(out, static_cast<std::uint16_t>(blob.name.size()));
        out.insert(out.end(), blob.name.begin(), blob.name.end());
        out.push_back(static_cast<unsigned char>(blob.dims.size()));
        for (auto d : blob.dims) put_u32(out, d);
        put_u64(out, blob.data.size());
        for (double v : blob.data) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(DataError::Kind::other, "cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError(DataError::Kind::other, "short write to " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(DataError::Kind::missing_file, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    Reader r{bytes};
    if (r.str(4) != "RIPM") throw DataError(DataError::Kind::bad_magic, "not a checkpoint file");
    const std::uint16_t version = r.u16();
    if (version != 1) {
        throw DataError(DataError::Kind::bad_version,
                        "unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.method_id = r.u16();
    const std::uint32_t cfg_len = r.u32();
    ckpt.config_json = r.str(cfg_len);
    const std::uint32_t n_blobs = r.u32();
    for (std::uint32_t i = 0; i < n_blobs; ++i) {
        Blob blob;
        blob.name = r.str(r.u16());
        const unsigned ndim = r.str(1)[0];
        for (unsigned d = 0; d < ndim; ++d) blob.dims.push_back(r.u32());
        const std::uint64_t count = r.u64();
        blob.data.resize(count);
        for (std::uint64_t k = 0; k < count; ++k) blob.data[k] = r.f64();
        ckpt.blobs.push_back(std::move(blob));
    }
    if (r.pos != bytes.size()) {
        throw DataError(DataError::Kind::trailing_bytes, "trailing bytes in checkpoint");
    }
    return ckpt;
}

// --- adapters -------------------------------------------------------------------

Checkpoint checkpoint_from_neural(NeuralModel& model, const std::string& method,
                                  const std::string& config_json, const NormStats& stats) {
    Checkpoint ckpt;
    ckpt.method_id = method_id(method);
    ckpt.config_json = config_json;
    for (const auto& [name, t] : model.named_parameters()) {
        Blob blob;
        blob.name = name;
        for (auto d : t.shape()) blob.dims.push_back(static_cast<std::uint32_t>(d));
        blob.data = t.values();
        ckpt.blobs.push_back(std::move(blob));
    }
    for (const auto& [name, buf] : model.named_buffers()) {
        ckpt.blobs.push_back(
            Blob{name, {static_cast<std::uint32_t>(buf->size())}, *buf});
    }
    ckpt.blobs.push_back(
        Blob{"norm.mean", {static_cast<std::uint32_t>(stats.mean.size())}, stats.mean});
    ckpt.blobs.push_back(
        Blob{"norm.std", {static_cast<std::uint32_t>(stats.std.size())}, stats.std});
    return ckpt;
}

NormStats load_neural_checkpoint(const Checkpoint& ckpt, NeuralModel& model) {
    for (auto& [name, t] : model.named_parameters()) {
        const Blob& blob = ckpt.find(name);
        if (blob.data.size() != t.size()) {
            throw DataError(DataError::Kind::incompatible,
                            "blob '" + name + "' has " + std::to_string(blob.data.size()) +
                                " values, model expects " + std::to_string(t.size()));
        }
        Tensor target = t;
        target.values() = blob.data;
    }
    for (auto& [name, buf] : model.named_buffers()) {
        const Blob& blob = ckpt.find(name);
        if (blob.data.size() != buf->size()) {
            throw DataError(DataError::Kind::incompatible, "buffer '" + name + "' size mismatch");
        }
        *buf = blob.data;
    }
    NormStats stats;
    stats.mean = ckpt.find("norm.mean").data;
    stats.std = ckpt.find("norm.std").data;
    return stats;
}

Checkpoint checkpoint_from_svm(const OvrSvmModel& model, const std::string& config_json) {
    Checkpoint ckpt;
    ckpt.method_id = method_id("svm");
    ckpt.config_json = config_json;
    for (int c = 0; c < kNumClasses; ++c) {
        const BinarySvm& m = model.machines[c];
        const std::string prefix = "svm" + std::to_string(c) + ".";
        ckpt.blobs.push_back(Blob{prefix + "sv",
                                  {static_cast<std::uint32_t>(m.support_vectors.rows),
                                   static_cast<std::uint32_t>(m.support_vectors.cols)},
                                  m.support_vectors.data});
        ckpt.blobs.push_back(
            Blob{prefix + "coef", {static_cast<std::uint32_t>(m.coef.size())}, m.coef});
        ckpt.blobs.push_back(Blob{prefix + "bias", {1}, {m.bias}});
    }
    ckpt.blobs.push_back(
        Blob{"norm.mean", {static_cast<std::uint32_t>(model.norm.mean.size())}, model.norm.mean});
    ckpt.blobs.push_back(
        Blob{"norm.std", {static_cast<std::uint32_t>(model.norm.std.size())}, model.norm.std});
    ckpt.blobs.push_back(Blob{"meta", {3}, {model.gamma, model.c, double(model.k_frames)}});
    return ckpt;
}

OvrSvmModel load_svm_checkpoint(const Checkpoint& ckpt) {
    OvrSvmModel model;
    const Blob& meta = ckpt.find("meta");
    if (meta.data.size() != 3) {
        throw DataError(DataError::Kind::incompatible, "svm checkpoint meta blob malformed");
    }
    model.gamma = meta.data[0];
    model.c = meta.data[1];
    model.k_frames = static_cast<std::size_t>(meta.data[2]);
    for (int c = 0; c < kNumClasses; ++c) {
        const std::string prefix = "svm" + std::to_string(c) + ".";
        const Blob& sv = ckpt.find(prefix + "sv");
        if (sv.dims.size() != 2) {
            throw DataError(DataError::Kind::incompatible, "svm sv blob must be 2-d");
        }
        BinarySvm& m = model.machines[c];
        m.support_vectors.rows = sv.dims[0];
        m.support_vectors.cols = sv.dims[1];
        m.support_vectors.data = sv.data;
        m.coef = ckpt.find(prefix + "coef").data;
        if (m.coef.size() != m.support_vectors.rows) {
            throw DataError(DataError::Kind::incompatible, "svm coef/sv count mismatch");
        }
        m.bias = ckpt.find(prefix + "bias").data.at(0);
        m.gamma = model.gamma;
    }
    model.norm.mean = ckpt.find("norm.mean").data;
    model.norm.std = ckpt.find("norm.std").data;
    model.fitted = true;
    return model;
}

}  // namespace rip
