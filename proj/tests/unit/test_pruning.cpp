#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "../common/oracles.hpp"
#include "../common/test_util.hpp"
#include "trajaware/errors.hpp"
#include "trajaware/pruning.hpp"

using namespace trajaware;
using testing_util::graph_from_edges;

using oracles::covers_all;
using oracles::minimum_cover_size;

TEST(Pruning, SmallDegreeKeepsEverything) {
  const auto g = graph_from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {3, 4}});
  const auto p = prune_actions(g, 0, 8, 1);
  std::vector<int> r = p.retained;
  std::sort(r.begin(), r.end());
  EXPECT_EQ(r, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(p.retained.front(), 3);  // the only neighbour with a two-hop link ranks first
  EXPECT_EQ(p.covered_two_hop, std::set<int>{4});
}

TEST(Pruning, CompleteGraphFillsToCap) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < 12; ++i)
    for (int j = i + 1; j < 12; ++j) edges.emplace_back(i, j);
  const auto g = graph_from_edges(12, edges);
  for (int holder = 0; holder < 12; ++holder) {
    EXPECT_TRUE(two_hop_set(g, holder).empty());
    const auto p = prune_actions(g, holder, 8, 3);
    EXPECT_EQ(p.retained.size(), 8u);
    EXPECT_FALSE(p.coverage_lost);
  }
}

TEST(Pruning, RankingOrder) {
  // Neighbours 1, 2, 3 of holder 0; two-hop nodes 4, 5, 6.
  const auto g = graph_from_edges(7, {{0, 1}, {0, 2}, {0, 3}, {2, 4}, {2, 5}, {3, 6}, {1, 6}});
  EXPECT_EQ(rank_neighbours(g, 0), (std::vector<int>{2, 1, 3}));
}

TEST(Pruning, HolderMustExist) {
  const auto g = graph_from_edges(2, {{0, 1}});
  EXPECT_THROW(prune_actions(g, 5, 8, 0), LookupError);
  EXPECT_THROW(prune_actions(g, 0, 0, 0), ParameterError);
}

TEST(Pruning, RandomGraphProperties) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> density(0.15, 0.9);
  int eligible = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);
    const auto g = testing_util::random_graph(n, density(rng), rng);
    const int holder = static_cast<int>(rng() % n);
    const auto p = prune_actions(g, holder, 8, trial);
    const int deg = g.degree(holder);
    EXPECT_EQ(static_cast<int>(p.retained.size()), std::min(deg, 8));
    std::set<int> uniq(p.retained.begin(), p.retained.end());
    EXPECT_EQ(uniq.size(), p.retained.size());
    for (int r : p.retained) EXPECT_TRUE(g.connected(holder, r));
    EXPECT_EQ(prune_actions(g, holder, 8, trial).retained, p.retained);
    if (minimum_cover_size(g, holder, 8) <= 8) {
      ++eligible;
      EXPECT_TRUE(covers_all(g, holder, p.retained)) << "trial " << trial;
      EXPECT_EQ(p.covered_two_hop, two_hop_set(g, holder));
    }
  }
  EXPECT_GT(eligible, 400);
}

TEST(Pruning, DegreeHistogram) {
  TraceFrame lone{0, {{1, {0, 0}, 0.0, {}}}};
  const auto h = degree_histogram({lone, lone}, 800.0, 8);
  EXPECT_EQ(h.before, (std::map<int, long>{{0, 2}}));
  EXPECT_EQ(h.after, h.before);

  const auto w = testing_util::small_world(6, 30, 60.0);
  const auto d = degree_histogram(w.trace, 800.0, 8);
  long before = 0, after = 0;
  for (auto [k, c] : d.before) before += c;
  for (auto [k, c] : d.after) {
    after += c;
    EXPECT_LE(k, 8);
  }
  EXPECT_EQ(before, after);
  EXPECT_GE(d.before.rbegin()->first, 16);
  EXPECT_EQ(d.after.rbegin()->first, 8);
}
