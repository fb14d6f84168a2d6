#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cage/core/matrix.hpp"
#include "cage/core/parameter.hpp"

namespace cage::app {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadMagicError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class UnsupportedVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

// Truncated file, or a tensor directory that does not exactly tile the payload.
class CorruptCheckpointError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

// A checkpoint tensor that is missing or has the wrong shape for the model.
class TensorMismatchError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

inline constexpr std::string_view kCheckpointMagic = "CAGECKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container layout: 8 magic bytes, u32 LE version, u64 LE metadata length,
/// UTF-8 JSON metadata, then float32 LE tensors. metadata["tensors"] lists
/// {name, shape: [rows, cols], offset} with byte offsets into the payload.
struct Checkpoint {
    nlohmann::json metadata;
    std::map<std::string, Matrix> tensors;
};

// Adds the tensor directory to `metadata` and lays tensors out in the order
// given.
std::string encode_checkpoint(nlohmann::json metadata, std::span<const Parameter* const> tensors);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& metadata,
                     std::span<const Parameter* const> tensors);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every tensor into the matching parameter. Each parameter must have a
// tensor of the same shape and every tensor must be claimed.
void restore_parameters(const Checkpoint& checkpoint, std::span<Parameter* const> params);

}  // namespace cage::app
