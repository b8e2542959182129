#pragma once

// Road networks made of segment nodes, synthetic perturbed-grid maps,
// synthetic vehicle traffic, and the trace/route/map file formats.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trajaware/geometry.hpp"
#include "trajaware/kernels.hpp"

namespace trajaware {

inline constexpr double kMaxSegmentLength = 200.0;
inline constexpr double kPositionSnapTolerance = 0.5;
inline constexpr double kOnRoadTolerance = 1e-6;

struct SegmentNode {
  int id = 0;
  Vec2 position;
};

struct Segment {
  int from = 0;
  int to = 0;
};

class RoadNetwork {
 public:
  RoadNetwork() = default;

  /// Validates the network invariants; throws ValidationError.
  RoadNetwork(std::vector<SegmentNode> nodes, std::vector<Segment> segments,
              std::vector<int> junction_ids, Vec2 bounds);

  const std::vector<SegmentNode>& nodes() const { return nodes_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<int>& junction_ids() const { return junction_ids_; }
  Vec2 bounds() const { return bounds_; }
  double diagonal() const { return norm(bounds_); }
  bool empty() const { return segments_.empty(); }

  bool has_node(int id) const { return index_.contains(id); }
  const SegmentNode& node(int id) const;
  Vec2 position(int id) const { return node(id).position; }

  double segment_length(std::size_t segment_index) const;
  double mean_segment_length() const;

  /// Indices of segments leaving / entering a node.
  const std::vector<std::size_t>& outgoing(int id) const;
  const std::vector<std::size_t>& incoming(int id) const;

  /// Indices into segments() of the segment a->b, or npos.
  std::size_t find_segment(int from, int to) const;

  /// Length-weighted shortest route as a node id walk, empty if unreachable.
  std::vector<int> shortest_route(int from, int to) const;

  /// Distance from p to the nearest segment of the network.
  double distance_to_network(Vec2 p) const;

  kernels::SegmentSoA segment_soa() const {
    return {seg_ax_.data(), seg_ay_.data(), seg_bx_.data(), seg_by_.data(), segments_.size()};
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<SegmentNode> nodes_;
  std::vector<Segment> segments_;
  std::vector<int> junction_ids_;
  Vec2 bounds_;
  std::unordered_map<int, std::size_t> index_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<double> seg_ax_, seg_ay_, seg_bx_, seg_by_;
};

struct VehicleState {
  int vehicle_id = 0;
  Vec2 position;
  double speed = 0.0;
  /// Segment nodes still ahead; the first entry is the end of the current segment.
  std::vector<int> planned_path;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct TraceFrame {
  int time_step = 0;
  std::vector<VehicleState> vehicles;

  const VehicleState* find(int vehicle_id) const;
  friend bool operator==(const TraceFrame&, const TraceFrame&) = default;
};

using Trace = std::vector<TraceFrame>;

struct Route {
  int vehicle_id = 0;
  int depart_t = 0;
  std::vector<int> node_ids;
};

// --- synthetic world -------------------------------------------------------

RoadNetwork generate_map(std::uint64_t seed, int grid_cols, int grid_rows, double cell_size,
                         double perturbation);

struct TrafficOptions {
  int band_lo = 40;
  int band_hi = 70;
  double speed_min = 8.0;
  double speed_max = 15.0;
  /// Std-dev of the centre-weighted junction choice, as a fraction of the
  /// shorter map side.
  double centre_sigma = 0.3;
};

/// Per-second traffic. `density` is the mean spawn rate in vehicles/second.
Trace generate_traffic(const RoadNetwork& map, std::uint64_t seed, int duration, double density,
                       const TrafficOptions& options = {});

/// Spawn rate whose steady-state active count is `target_active`.
double calibrate_density(const RoadNetwork& map, double target_active,
                         const TrafficOptions& options = {});

// --- geometry on the planned path ------------------------------------------

/// The segment start node for a vehicle, i.e. u such that the vehicle lies
/// on u -> planned_path[0]. Throws ConsistencyError when it is off its path.
int current_segment_start(const RoadNetwork& map, const VehicleState& v);

/// The next two segment nodes along the planned path, padded with the
/// destination when only one remains.
std::pair<SegmentNode, SegmentNode> next_two_segment_nodes(const RoadNetwork& map,
                                                           const VehicleState& v);

// --- file formats -----------------------------------------------------------

void save_map(const RoadNetwork& map, const std::filesystem::path& path);
RoadNetwork load_map(const std::filesystem::path& path);

/// Companion route file for a trace CSV: `x.csv` -> `x.routes.json`.
std::filesystem::path route_path_for(const std::filesystem::path& trace_csv);

std::vector<Route> routes_from_trace(const RoadNetwork& map, const Trace& trace);

void save_trace(const RoadNetwork& map, const Trace& trace, const std::filesystem::path& csv,
                const std::filesystem::path& routes);
void save_trace(const RoadNetwork& map, const Trace& trace, const std::filesystem::path& csv);

Trace load_trace(const std::filesystem::path& csv, const std::filesystem::path& routes,
                 const RoadNetwork& map);
Trace load_trace(const std::filesystem::path& csv, const RoadNetwork& map);

}  // namespace trajaware
