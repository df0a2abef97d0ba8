#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "vsgno/operator.hpp"

namespace vsgno {

nlohmann::json config_to_json(const ModelConfig& config);
/// Strict: unknown keys and wrongly typed values throw ConfigError.
ModelConfig config_from_json(const nlohmann::json& j);

struct Checkpoint {
  VsGnoModel model;
  /// Free-form metadata stored alongside the parameters (normalization, epoch, ...).
  nlohmann::json metadata;
  /// Debug checkpoints that predict the ground truth verbatim.
  bool echo_truth = false;
};

/// Container layout: 8-byte magic "VSGNOCK1", u64 little-endian header
/// length, JSON header (config, edge count, parameter names and shapes in
/// order), then every parameter as little-endian float64 in header order.
void write_checkpoint(const std::filesystem::path& path, const VsGnoModel& model,
                      const nlohmann::json& metadata = nlohmann::json::object(), bool echo_truth = false);

/// Throws FormatError on any structural problem, IoError if unreadable.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace vsgno
