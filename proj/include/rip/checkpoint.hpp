#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rip/models.hpp"
#include "rip/svm.hpp"

namespace rip {

// Model checkpoint container: magic "RIPM", u16 version=1, u16 method id,
// u32 config length + config JSON echo, u32 blob count, then named blobs.
// Each blob: u16 name length, name bytes, u8 ndim, ndim x u32 dims,
// u64 value count, values as little-endian f64. Documented in the README.

struct Blob {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

struct Checkpoint {
    std::uint16_t method_id = 0;
    std::string config_json;
    std::vector<Blob> blobs;

    const Blob& find(const std::string& name) const;
    bool has(const std::string& name) const;
};

std::uint16_t method_id(const std::string& method);
std::string method_name_of(std::uint16_t id);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// --- model adapters ------------------------------------------------------------

Checkpoint checkpoint_from_neural(NeuralModel& model, const std::string& method,
                                  const std::string& config_json, const NormStats& stats);
// copies blobs into an already-constructed model; validates names and sizes
NormStats load_neural_checkpoint(const Checkpoint& ckpt, NeuralModel& model);

Checkpoint checkpoint_from_svm(const OvrSvmModel& model, const std::string& config_json);
OvrSvmModel load_svm_checkpoint(const Checkpoint& ckpt);

}  // namespace rip
