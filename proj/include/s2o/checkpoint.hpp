#pragma once

#include <filesystem>
#include <string>

#include "s2o/network.hpp"

namespace s2o::nn {

inline constexpr int kCheckpointSchemaVersion = 1;

/// JSON document with keys in fixed order:
/// schema_version, layer_dims, activations, weights (row-major, one array per layer).
std::string checkpoint_to_string(const Network& net);
Network checkpoint_from_string(const std::string& text);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace s2o::nn
