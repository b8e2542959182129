#include "trajaware/comm_graph.hpp"

#include <algorithm>
#include <deque>

#include "trajaware/errors.hpp"

namespace trajaware {

std::optional<int> CommGraph::index_of(int vehicle_id) const {
  for (std::size_t i = 0; i < node_ids.size(); ++i)
    if (node_ids[i] == vehicle_id) return static_cast<int>(i);
  return std::nullopt;
}

int CommGraph::require_index(int vehicle_id) const {
  auto i = index_of(vehicle_id);
  if (!i) throw LookupError("vehicle " + std::to_string(vehicle_id) + " is not in the graph");
  return *i;
}

bool CommGraph::connected(int i, int j) const {
  const auto& nb = neighbours[i];
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<bool> CommGraph::adjacency_matrix() const {
  const std::size_t n = size();
  std::vector<bool> a(n * n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (int j : neighbours[i]) a[i * n + j] = true;
  return a;
}

void compute_features(CommGraph& g, const FeatureScale& scale) {
  g.scale = scale;
  const std::size_t n = g.size();
  g.features.assign(n * kNodeFeatures, 0.0);
  const double inv = 1.0 / scale.map_diagonal;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = g.features.data() + i * kNodeFeatures;
    if (g.destination_index >= 0) {
      const Vec2 d = g.positions[g.destination_index] - g.positions[i];
      row[0] = d.x * inv;
      row[1] = d.y * inv;
    }
    if (g.holder_index >= 0) {
      const Vec2 h = g.positions[g.holder_index] - g.positions[i];
      row[2] = h.x * inv;
      row[3] = h.y * inv;
    }
    row[4] = static_cast<int>(i) == g.destination_index ? 1.0 : 0.0;
    row[5] = static_cast<int>(i) == g.holder_index ? 1.0 : 0.0;
    row[6] = static_cast<double>(g.neighbours[i].size()) / scale.k_max;
  }
}

CommGraph build_comm_graph(std::span<const int> ids, std::span<const Vec2> positions,
                           double comm_range, int dest_id, int holder_id,
                           const FeatureScale& scale) {
  if (!(comm_range > 0.0)) throw ParameterError("comm_range must be positive");
  if (ids.size() != positions.size()) throw ParameterError("ids and positions differ in length");
  CommGraph g;
  g.node_ids.assign(ids.begin(), ids.end());
  g.positions.assign(positions.begin(), positions.end());
  const std::size_t n = g.size();
  g.neighbours.assign(n, {});
  const double r2 = comm_range * comm_range;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2 d = g.positions[i] - g.positions[j];
      if (d.x * d.x + d.y * d.y <= r2) {
        g.neighbours[i].push_back(static_cast<int>(j));
        g.neighbours[j].push_back(static_cast<int>(i));
      }
    }
  for (auto& nb : g.neighbours) std::sort(nb.begin(), nb.end());
  g.holder_index = g.require_index(holder_id);
  g.destination_index = g.index_of(dest_id).value_or(-1);
  compute_features(g, scale);
  return g;
}

CommGraph build_comm_graph(const TraceFrame& frame, double comm_range, int dest_id, int holder_id,
                           const FeatureScale& scale) {
  std::vector<int> ids;
  std::vector<Vec2> pos;
  for (const auto& v : frame.vehicles) {
    ids.push_back(v.vehicle_id);
    pos.push_back(v.position);
  }
  auto g = build_comm_graph(ids, pos, comm_range, dest_id, holder_id, scale);
  if (g.destination_index < 0)
    throw LookupError("destination " + std::to_string(dest_id) + " is not in the frame");
  return g;
}

HopCount HopDistances::at(int vehicle_id) const {
  auto it = dist.find(vehicle_id);
  return it == dist.end() ? std::nullopt : it->second;
}

std::vector<HopCount> hop_vector(const CommGraph& g, int source_index) {
  std::vector<HopCount> dist(g.size());
  std::deque<int> queue{source_index};
  dist[source_index] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : g.neighbours[u])
      if (!dist[v]) {
        dist[v] = *dist[u] + 1;
        queue.push_back(v);
      }
  }
  return dist;
}

HopDistances bfs_hops(const CommGraph& g, int source_id) {
  const auto dist = hop_vector(g, g.require_index(source_id));
  HopDistances out{source_id, {}};
  for (std::size_t i = 0; i < g.size(); ++i) out.dist.emplace(g.node_ids[i], dist[i]);
  return out;
}

std::set<int> two_hop_set(const CommGraph& g, int node_id) {
  const int src = g.require_index(node_id);
  std::set<int> out;
  for (int nb : g.neighbours[src])
    for (int x : g.neighbours[nb])
      if (x != src && !g.connected(src, x)) out.insert(g.node_ids[x]);
  return out;
}

}  // namespace trajaware
