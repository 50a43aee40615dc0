#pragma once

#include <stdexcept>
#include <string>

namespace simda {

// Error taxonomy. The CLI maps these onto exit codes, so keep the
// distinctions (usage vs config vs data) meaningful.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor extents do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid build-time or file-based configuration.
struct ConfigError : Error {
    using Error::Error;
};

// API misuse (non-scalar loss, eta != 0 inversion, ...).
struct UsageError : Error {
    using Error::Error;
};

// Value outside its documented range (e.g. timestep).
struct RangeError : Error {
    using Error::Error;
};

// Token not in the closed caption vocabulary.
struct VocabError : Error {
    using Error::Error;
};

// Checkpoint or data file failed validation.
struct CorruptFileError : Error {
    using Error::Error;
};

// A module broke one of its stated contracts (frozen tensor modified,
// model output shape mismatch, diverged training run).
struct ContractError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace simda
