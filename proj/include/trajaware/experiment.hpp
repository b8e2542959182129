#pragma once

// End-to-end orchestration shared by the command line and the acceptance
// harness: world generation, leave-one-map-out training, evaluation cells.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajaware/config.hpp"

namespace trajaware {

struct WorldData {
  RoadNetwork map;
  Trace trace;

  World view() const { return {&map, &trace}; }
};

WorldData generate_world(const RunConfig& cfg, int index);
std::vector<WorldData> generate_worlds(const RunConfig& cfg);

std::filesystem::path map_file(const std::filesystem::path& dir, int index);
std::filesystem::path trace_file(const std::filesystem::path& dir, int index);

void write_worlds(const std::vector<WorldData>& worlds, const std::filesystem::path& dir);
/// Loads `<output_dir>/maps` when it holds every map, else generates.
std::vector<WorldData> load_or_generate_worlds(const RunConfig& cfg);

/// Every world except the held-out one, in index order.
std::vector<World> training_worlds(const std::vector<WorldData>& worlds, int held_out);

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& path);

void save_predictor(const std::filesystem::path& path, const Predictor& p);
Predictor load_predictor(const std::filesystem::path& path);

void save_policy(const std::filesystem::path& path, const QNetParams& p);
/// Throws ValidationError unless the checkpoint's architecture equals `expected`.
QNetParams load_policy(const std::filesystem::path& path, const QNetConfig& expected);

Predictor train_predictor_on(const RunConfig& cfg, const std::vector<WorldData>& worlds);
TrainingResult train_policy_on(const RunConfig& cfg, const std::vector<WorldData>& worlds,
                               const QNetConfig& net, const std::filesystem::path& checkpoint_dir);

struct EvalCell {
  std::string variant;
  Observation observation = Observation::Complete;
  CongestionMode congestion = CongestionMode::Off;
};

std::string cell_name(const EvalCell& c);

/// Evaluates every configured cell on the held-out world. `policies` maps
/// variant names to trained parameters (ignored for oracle/random policies).
/// Writes one results CSV per cell into `out_dir` when it is non-empty and
/// returns the summary document.
nlohmann::json evaluate_cells(const RunConfig& cfg, const WorldData& held_out,
                              const std::map<std::string, QNetParams>& policies,
                              const Predictor* predictor, const std::filesystem::path& out_dir);

}  // namespace trajaware
