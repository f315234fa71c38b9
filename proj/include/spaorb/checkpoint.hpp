#pragma once

#include "spaorb/losses.hpp"
#include "spaorb/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spaorb::checkpoint {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kFormat = "spaorb-checkpoint";

struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  bool operator==(const AdamState &) const = default;
};

/// Resumable training position stored alongside the weights.
struct TrainingState {
  int epoch = 0; // completed epochs
  double best_val = 0.0;
  int best_epoch = 0;
  AdamState adam;

  bool operator==(const TrainingState &) const = default;
};

struct Checkpoint {
  model::ModelConfig config;
  losses::LossWeights weights;
  model::ModelParams params;
  std::optional<TrainingState> training;
};

nlohmann::ordered_json model_config_to_json(const model::ModelConfig &cfg);
/// Missing keys keep their defaults; unknown keys are a SchemaError.
model::ModelConfig model_config_from_json(const nlohmann::ordered_json &j);

nlohmann::ordered_json loss_weights_to_json(const losses::LossWeights &w);
losses::LossWeights loss_weights_from_json(const nlohmann::ordered_json &j);

/// One JSON header line, then the float64 payload (little-endian): the
/// parameters in manifest order, followed by the Adam moments when present.
std::string serialize(const Checkpoint &ckpt);

/// Throws SchemaError on any mismatch between header, manifest and payload.
Checkpoint deserialize(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load(const std::filesystem::path &path);

} // namespace spaorb::checkpoint
