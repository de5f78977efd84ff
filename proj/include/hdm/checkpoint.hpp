#pragma once

#include "hdm/config.hpp"
#include "hdm/mlp.hpp"

#include <filesystem>
#include <string_view>

namespace hdm {

/// Checkpoint = JSON manifest + sidecar blob of little-endian float64
/// parameters in layer order (each layer: W row-major, then b). The manifest
/// records the blob's name, size and FNV-1a-64 digest; both files are
/// written atomically.
struct Checkpoint {
    MlpDenoiser model;
    json manifest;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Sidecar blob path for a manifest path ("run/model.json" -> "run/model.weights.bin").
std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path);

std::string encode_weights(const LayerStack& layers);

/// `info` is merged into the manifest (schedule, loss, regime, seed, metrics ...).
void save_checkpoint(const std::filesystem::path& manifest_path, const MlpDenoiser& model, const json& info);

/// Throws ConfigError on a missing, malformed, truncated or corrupted checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace hdm
