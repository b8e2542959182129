#pragma once

// Per-step vehicle communication graphs, hop distances and node features.

#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "trajaware/geometry.hpp"
#include "trajaware/road_world.hpp"

namespace trajaware {

inline constexpr double kDefaultCommRange = 800.0;

/// Feature layout, one row per vehicle:
///   0,1  offset to the destination / map diagonal
///   2,3  offset to the current holder / map diagonal
///   4    is_destination
///   5    is_holder
///   6    degree / k_max
inline constexpr std::size_t kNodeFeatures = 7;

struct FeatureScale {
  double map_diagonal = 1.0;
  int k_max = 8;
};

struct CommGraph {
  std::vector<int> node_ids;
  std::vector<Vec2> positions;
  /// Ascending neighbour indices per node; symmetric, no self loops.
  std::vector<std::vector<int>> neighbours;
  /// size() x kNodeFeatures, row-major.
  std::vector<double> features;
  int holder_index = -1;
  int destination_index = -1;  // -1 when the destination is not in the graph
  FeatureScale scale;

  std::size_t size() const { return node_ids.size(); }
  std::optional<int> index_of(int vehicle_id) const;
  int require_index(int vehicle_id) const;  // throws LookupError
  bool connected(int i, int j) const;
  int degree(int i) const { return static_cast<int>(neighbours[i].size()); }
  std::span<const double> feature_row(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * kNodeFeatures, kNodeFeatures};
  }
  /// Dense boolean adjacency, row-major.
  std::vector<bool> adjacency_matrix() const;
};

/// Graph over all vehicles in the frame. Throws LookupError when the
/// holder or destination is missing.
CommGraph build_comm_graph(const TraceFrame& frame, double comm_range, int dest_id, int holder_id,
                           const FeatureScale& scale = {});

/// Graph over explicit positions. The destination may be absent, in which
/// case its features are zero and destination_index is -1.
CommGraph build_comm_graph(std::span<const int> ids, std::span<const Vec2> positions,
                           double comm_range, int dest_id, int holder_id,
                           const FeatureScale& scale = {});

/// Recomputes feature rows from positions, adjacency and roles.
void compute_features(CommGraph& g, const FeatureScale& scale);
inline void compute_features(CommGraph& g) { compute_features(g, g.scale); }

/// std::nullopt marks an unreachable vehicle.
using HopCount = std::optional<int>;

struct HopDistances {
  int source_id = 0;
  std::unordered_map<int, HopCount> dist;

  HopCount at(int vehicle_id) const;
};

/// Index-aligned hop counts from a source index.
std::vector<HopCount> hop_vector(const CommGraph& g, int source_index);

HopDistances bfs_hops(const CommGraph& g, int source_id);

/// Vehicles at exactly two hops from `node_id`.
std::set<int> two_hop_set(const CommGraph& g, int node_id);

}  // namespace trajaware
