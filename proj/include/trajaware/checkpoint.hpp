#pragma once

// Versioned JSON parameter checkpoints:
//   {"format": "trajaware-checkpoint", "version": 1, "meta": {...},
//    "tensors": [{"name", "shape", "data"}, ...]}

#include <filesystem>

#include <json.hpp>

#include "trajaware/layers.hpp"

namespace trajaware {

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Loads values into `params`, which fixes the expected names and shapes.
/// Throws ValidationError on any architecture mismatch. Returns the meta block.
nlohmann::json load_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params);

}  // namespace trajaware
