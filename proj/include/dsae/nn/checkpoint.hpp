#pragma once

#include <filesystem>
#include <string>

#include "dsae/nn/model.hpp"

namespace dsae::nn {

/// Checkpoint layout: the 5 magic bytes "DSAE1", a little-endian uint64 byte
/// length, a JSON header {config, tensors: [{name, shape}]}, then every tensor
/// as little-endian float32 in header order.
void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const ModelParams& p);
ModelParams parse_checkpoint(const std::string& bytes);

}  // namespace dsae::nn
