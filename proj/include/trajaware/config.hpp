#pragma once

// RunConfig: every knob of an experiment in one JSON document. Loading
// starts from the defaults, applies the file and then `key=value`
// overrides, and validates every field, naming it on failure.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajaware/dqn.hpp"
#include "trajaware/traj_predict.hpp"

namespace trajaware {

struct WorldConfig {
  int maps = 6;
  int held_out = 5;
  int grid_cols = 9;
  int grid_rows = 9;
  double cell_size = 400.0;
  double perturbation = 0.3;
  int duration = 600;
  double target_active = 55.0;
  TrafficOptions traffic;
};

struct EvalConfig {
  int episodes = 300;
  std::uint64_t seed = 7;
  /// "q", "oracle" or "random".
  std::string policy = "q";
  std::vector<std::string> observations{"complete"};
  std::vector<std::string> congestion{"off"};
  /// Policy variants: full, attention_only, no_attention, neither.
  std::vector<std::string> variants{"full"};
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "run";
  WorldConfig world;
  SimOptions sim;          // evaluation environment (predictor pointer unused)
  QNetConfig net;          // k_max mirrors sim.k_max
  TrainConfig train;
  PredictorConfig predictor;
  PredictorTrainConfig predictor_train;
  EvalConfig eval;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Throws ValidationError naming the offending field path.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies a dotted `key=value` override; the value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

/// QNetConfig for a named variant of the base network.
QNetConfig variant_config(const QNetConfig& base, const std::string& variant);

nlohmann::json to_json(const QNetConfig& c);
QNetConfig qnet_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PredictorConfig& c);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);

}  // namespace trajaware
