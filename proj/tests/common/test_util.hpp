#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trajaware/comm_graph.hpp"
#include "trajaware/road_world.hpp"

namespace trajaware::testing_util {

/// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("trajaware_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A CommGraph with ids 0..n-1 and the given undirected edges. Positions are
/// placeholders; features are recomputed for the given roles.
inline CommGraph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                                  int holder = 0, int destination = -1) {
  CommGraph g;
  for (int i = 0; i < n; ++i) {
    g.node_ids.push_back(i);
    g.positions.push_back({10.0 * i, 5.0 * (i % 3)});
  }
  g.neighbours.assign(n, {});
  for (auto [a, b] : edges) {
    g.neighbours[a].push_back(b);
    g.neighbours[b].push_back(a);
  }
  for (auto& nb : g.neighbours) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  g.holder_index = holder;
  g.destination_index = destination;
  g.scale = FeatureScale{1000.0, 8};
  compute_features(g);
  return g;
}

/// Erdos-Renyi graph on n nodes.
inline CommGraph random_graph(int n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(p);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (edge(rng)) edges.emplace_back(i, j);
  return graph_from_edges(n, edges, 0, n > 1 ? n - 1 : -1);
}

/// A small synthetic world shared by several suites.
struct SmallWorld {
  RoadNetwork map;
  Trace trace;
};

inline SmallWorld small_world(std::uint64_t seed = 1, int duration = 120, double target = 45.0) {
  SmallWorld w;
  w.map = generate_map(seed, 6, 6, 400.0, 0.3);
  const double density = calibrate_density(w.map, target);
  w.trace = generate_traffic(w.map, seed + 100, duration, density);
  return w;
}

}  // namespace trajaware::testing_util
