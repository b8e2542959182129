#pragma once

// GRU trajectory predictor: 6-value inputs (position plus the next two
// segment nodes, normalised by the map bounds), displacement head, and a
// differentiable snap onto the road network.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trajaware/layers.hpp"
#include "trajaware/road_world.hpp"

namespace trajaware {

/// ceil(n_hop / f) - 1; throws ParameterError unless both are >= 1.
int missing_steps(int n_hop, int f);

using TrajInput = std::array<double, 6>;

TrajInput encode_point(const RoadNetwork& map, Vec2 position, Vec2 next, Vec2 second);
TrajInput encode_input(const RoadNetwork& map, const VehicleState& v);

/// Closest point on any segment; ties go to the lowest segment index.
/// Throws ConfigError on an empty map.
Vec2 project_to_road(Vec2 p, const RoadNetwork& map);
/// Row-wise projection of [b, 2] metre coordinates; differentiable.
nn::Tensor project_to_road(const nn::Tensor& points, const RoadNetwork& map);

/// One observed position with the two segment nodes ahead of it.
struct TrackPoint {
  Vec2 position;
  int next_node = 0;
  int second_node = 0;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

TrackPoint track_point(const VehicleState& v);

struct PredictorConfig {
  int hidden = 32;
  int window = 5;
  /// Metres per unit of head output.
  double displacement_scale = 10.0;
};

struct Predictor {
  PredictorConfig config;
  nn::GruParams gru;
  nn::DenseParams head;  // hidden -> 2 displacement components

  static Predictor init(const PredictorConfig& config, std::uint64_t seed);
  static Predictor zeros(const PredictorConfig& config);
  nn::NamedParams named() const;
};

/// Feeds the last `window` history points through the GRU, then predicts
/// `steps` one-second moves, snapping each onto the road and advancing the
/// segment nodes along `planned_path` (the nodes still ahead at the last
/// observation). steps = 0 returns the last observed position.
Vec2 rollout(const Predictor& p, const RoadNetwork& map, std::span<const TrackPoint> history,
             std::span<const int> planned_path, int steps);

struct PredictorTrainConfig {
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 3e-3;
  /// Cap on training pairs drawn from all traces (0 = no cap).
  int max_samples = 20000;
  std::uint64_t seed = 1;
};

/// A map together with a trace recorded on it.
struct MapTrace {
  const RoadNetwork* map = nullptr;
  const Trace* trace = nullptr;
};

struct PredictorTrainResult {
  Predictor predictor;
  std::vector<double> epoch_loss;  // mean squared error in (displacement_scale m)^2
};

/// Supervised one-step training on (history window -> next position) pairs,
/// with the loss measured after road projection.
PredictorTrainResult train_predictor(std::span<const MapTrace> data,
                                     const PredictorConfig& config,
                                     const PredictorTrainConfig& train);

struct ErrorBucket {
  int missing_steps = 0;
  long count = 0;
  double mean_error_m = 0.0;
  /// Largest distance of a prediction from the road network.
  double max_off_road_m = 0.0;
};

/// Mean rollout error for 1..max_steps missing steps on one trace, with at
/// most `samples_per_bucket` samples per bucket (0 = all).
std::vector<ErrorBucket> prediction_error_table(const Predictor& p, const MapTrace& data,
                                                int max_steps, int samples_per_bucket,
                                                std::uint64_t seed);

void write_error_report(const std::filesystem::path& csv, std::span<const ErrorBucket> buckets);

}  // namespace trajaware
