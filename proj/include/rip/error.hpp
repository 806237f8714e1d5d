#pragma once

#include <stdexcept>
#include <string>

namespace rip {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches in math operations.
struct ShapeError : Error {
    using Error::Error;
};

// Bad user input: config files, CLI flags, invalid parameter combinations.
struct ConfigError : Error {
    using Error::Error;
};

// Problems with datasets and serialized artifacts on disk.
struct DataError : Error {
    enum class Kind {
        bad_magic,
        bad_version,
        dim_mismatch,
        truncated,
        trailing_bytes,
        bad_label,
        missing_file,
        bad_manifest,
        incompatible,
        other,
    };

    DataError(Kind k, const std::string& msg) : Error(msg), kind(k) {}

    Kind kind;
};

// Non-finite values where the math contract requires finite ones.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace rip
