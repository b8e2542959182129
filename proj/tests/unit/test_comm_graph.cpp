#include <gtest/gtest.h>

#include <limits>

#include "../common/test_util.hpp"
#include "trajaware/comm_graph.hpp"
#include "trajaware/errors.hpp"

using namespace trajaware;
using testing_util::graph_from_edges;

namespace {

TraceFrame frame_of(const std::vector<Vec2>& pos) {
  TraceFrame f;
  for (std::size_t i = 0; i < pos.size(); ++i)
    f.vehicles.push_back({static_cast<int>(i), pos[i], 0.0, {}});
  return f;
}

std::vector<std::vector<int>> floyd_warshall(const CommGraph& g) {
  const int n = static_cast<int>(g.size());
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (int j : g.neighbours[i]) d[i][j] = 1;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

}  // namespace

TEST(CommGraph, RangeBoundary) {
  const auto near = build_comm_graph(frame_of({{0, 0}, {799, 0}}), 800.0, 1, 0);
  EXPECT_TRUE(near.connected(0, 1));
  const auto exact = build_comm_graph(frame_of({{0, 0}, {800, 0}}), 800.0, 1, 0);
  EXPECT_TRUE(exact.connected(0, 1));
  const auto far = build_comm_graph(frame_of({{0, 0}, {800.01, 0}}), 800.0, 1, 0);
  EXPECT_FALSE(far.connected(0, 1));
}

TEST(CommGraph, MissingRolesRejected) {
  const auto f = frame_of({{0, 0}, {10, 0}});
  EXPECT_THROW(build_comm_graph(f, 800.0, 7, 0), LookupError);
  EXPECT_THROW(build_comm_graph(f, 800.0, 1, 7), LookupError);
}

TEST(CommGraph, AdjacencyMatchesAllPairsOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3000.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec2> pos(30);
    for (auto& p : pos) p = {u(rng), u(rng)};
    const auto g = build_comm_graph(frame_of(pos), 800.0, 29, 0, {4000.0, 8});
    const auto adj = g.adjacency_matrix();
    for (int i = 0; i < 30; ++i) {
      EXPECT_FALSE(adj[i * 30 + i]);
      for (int j = 0; j < 30; ++j) {
        const bool expect = i != j && distance(pos[i], pos[j]) <= 800.0;
        EXPECT_EQ(adj[i * 30 + j], expect);
        EXPECT_EQ(adj[i * 30 + j], adj[j * 30 + i]);
      }
    }
    ASSERT_EQ(g.features.size(), 30 * kNodeFeatures);
    for (int i = 0; i < 30; ++i) {
      const auto row = g.feature_row(i);
      for (int c = 0; c < 4; ++c) {
        EXPECT_GE(row[c], -1.0);
        EXPECT_LE(row[c], 1.0);
      }
      EXPECT_EQ(row[4], i == 29 ? 1.0 : 0.0);
      EXPECT_EQ(row[5], i == 0 ? 1.0 : 0.0);
      EXPECT_DOUBLE_EQ(row[6], g.degree(i) / 8.0);
    }
  }
}

TEST(CommGraph, BfsSmallCases) {
  const auto path = graph_from_edges(3, {{0, 1}, {1, 2}});
  const auto h = bfs_hops(path, 0);
  EXPECT_EQ(h.at(0), 0);
  EXPECT_EQ(h.at(1), 1);
  EXPECT_EQ(h.at(2), 2);
  const auto pair = graph_from_edges(2, {});
  EXPECT_FALSE(bfs_hops(pair, 0).at(1).has_value());
}

TEST(CommGraph, BfsMatchesFloydWarshall) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 14);
    const auto g = testing_util::random_graph(n, 0.25, rng);
    const auto d = floyd_warshall(g);
    for (int s = 0; s < n; ++s) {
      const auto hops = hop_vector(g, s);
      for (int v = 0; v < n; ++v) {
        if (d[s][v] > n) {
          EXPECT_FALSE(hops[v].has_value());
        } else {
          ASSERT_TRUE(hops[v].has_value());
          EXPECT_EQ(*hops[v], d[s][v]);
        }
      }
      for (int u = 0; u < n; ++u)
        for (int v : g.neighbours[u])
          if (hops[u] && hops[v]) {
            EXPECT_LE(std::abs(*hops[u] - *hops[v]), 1);
          }
    }
  }
}

TEST(CommGraph, TwoHopSets) {
  const auto star = graph_from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  EXPECT_TRUE(two_hop_set(star, 0).empty());
  const auto path = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  EXPECT_EQ(two_hop_set(path, 0), std::set<int>{2});

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 14);
    const auto g = testing_util::random_graph(n, 0.3, rng);
    const int node = static_cast<int>(rng() % n);
    std::set<int> expect;
    const auto hops = bfs_hops(g, node);
    for (int v = 0; v < n; ++v)
      if (hops.at(v) == 2) expect.insert(v);
    EXPECT_EQ(two_hop_set(g, node), expect);
  }
}
