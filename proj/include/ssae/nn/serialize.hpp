#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssae/nn/layers.hpp"

namespace ssae::nn {

/// Writes parameter values as a flat little-endian float32 blob preceded by
/// a small header (magic, count, per-parameter element counts).
void save_params(const std::filesystem::path& path, const std::vector<Param<float>*>& params);

/// Loads a blob written by save_params into `params`; the parameter layout
/// must match exactly.
void load_params(const std::filesystem::path& path, const std::vector<Param<float>*>& params);

/// SHA-256 over the raw parameter bytes, lowercase hex.
std::string params_digest(const std::vector<Param<float>*>& params);

/// SHA-256 of an arbitrary byte string, lowercase hex.
std::string sha256_hex(const void* data, std::size_t size);

}  // namespace ssae::nn
