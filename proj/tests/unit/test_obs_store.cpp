#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "../common/test_util.hpp"
#include "trajaware/errors.hpp"
#include "trajaware/obs_store.hpp"

using namespace trajaware;

namespace {

// Stationary vehicles 0..n-1 on a line, `spacing` metres apart.
TraceFrame line_frame(int n, double spacing, int t) {
  TraceFrame f;
  f.time_step = t;
  for (int i = 0; i < n; ++i) f.vehicles.push_back({i, {spacing * i, 0.0}, 0.0, {0}});
  return f;
}

TraceFrame scattered_frame(int n, double side, int t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, side);
  TraceFrame f;
  f.time_step = t;
  for (int i = 0; i < n; ++i) f.vehicles.push_back({i, {u(rng), u(rng)}, 0.0, {0}});
  return f;
}

// An entry whose contents are a function of (id, seen), so equal
// timestamps always carry equal contents.
EntryPtr entry(int id, int seen) {
  auto e = std::make_shared<KnowledgeEntry>();
  e->vehicle_id = id;
  e->last_seen_t = seen;
  e->last_position = {static_cast<double>(id), static_cast<double>(seen)};
  e->planned_path = {id + seen};
  return e;
}

KnowledgeBase random_base(std::mt19937_64& rng) {
  KnowledgeBase kb;
  std::uniform_int_distribution<int> t(0, 5);
  for (int id = 0; id < 8; ++id)
    if (rng() % 2) kb.entries[id] = entry(id, t(rng));
  kb.clock = 5;
  return kb;
}

std::optional<int> bfs(const CommGraph& g, int from, int to) {
  std::vector<int> d(g.size(), -1);
  std::deque<int> q{from};
  d[from] = 0;
  while (!q.empty()) {
    const int x = q.front();
    q.pop_front();
    for (int y : g.neighbours[x])
      if (d[y] < 0) d[y] = d[x] + 1, q.push_back(y);
  }
  if (d[to] < 0) return std::nullopt;
  return d[to];
}

}  // namespace

TEST(ObsStore, IsolatedVehicleKnowsOnlyItself) {
  KnowledgeNetwork net;
  TraceFrame f = line_frame(3, 5000.0, 0);
  for (int t = 0; t < 4; ++t) {
    f.time_step = t;
    net.advance_second(f, 800.0, 2);
  }
  for (const auto& [owner, kb] : net.bases()) {
    ASSERT_EQ(kb.entries.size(), 1u);
    EXPECT_EQ(kb.staleness(owner), 0);
    EXPECT_EQ(kb.find(owner)->history.size(), 4u);
  }
  EXPECT_THROW(net.base(99), LookupError);
}

TEST(ObsStore, ChainStalenessMatchesMissingSteps) {
  for (int f : {1, 2, 4}) {
    KnowledgeNetwork net;
    const int n = 9;
    for (int t = 0; t < 15; ++t) net.advance_second(line_frame(n, 700.0, t), 800.0, f);
    const KnowledgeBase& kb = net.base(0);
    for (int d = 1; d < n; ++d) {
      ASSERT_TRUE(kb.staleness(d).has_value()) << d;
      EXPECT_EQ(*kb.staleness(d), missing_steps(d, f)) << "d=" << d << " f=" << f;
    }
  }
}

TEST(ObsStore, WorkedChainExample) {
  KnowledgeNetwork net;
  net.begin_second(line_frame(3, 700.0, 0));
  net.broadcast_round(line_frame(3, 700.0, 0), 800.0);
  EXPECT_FALSE(net.base(0).staleness(2).has_value());
  net.advance_second(line_frame(3, 700.0, 1), 800.0, 1);
  EXPECT_EQ(net.base(0).staleness(1), 0);
  EXPECT_EQ(net.base(0).staleness(2), 1);
}

TEST(ObsStore, OneHopNeighboursAreFresh) {
  std::mt19937_64 rng(4);
  KnowledgeNetwork net;
  for (int t = 0; t < 10; ++t) {
    const auto frame = scattered_frame(40, 4000.0, t, rng);
    net.advance_second(frame, 800.0, 1);
    const auto g = build_comm_graph(frame, 800.0, 0, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& kb = net.base(g.node_ids[i]);
      EXPECT_EQ(kb.staleness(g.node_ids[i]), 0);
      for (int j : g.neighbours[i]) EXPECT_EQ(kb.staleness(g.node_ids[j]), 0);
      for (const auto& [id, e] : kb.entries) EXPECT_LE(e->last_seen_t, kb.clock);
    }
  }
}

TEST(ObsStore, MergeIsIdempotentAndCommutative) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const KnowledgeBase a = random_base(rng), b = random_base(rng);
    KnowledgeBase ab = a, ba = b;
    merge_knowledge(ab, b);
    merge_knowledge(ba, a);
    EXPECT_EQ(ab, ba);
    KnowledgeBase again = ab;
    merge_knowledge(again, b);
    EXPECT_EQ(again, ab);
    for (const auto& [id, e] : ab.entries) {
      int best = -1;
      if (auto x = a.entries.find(id); x != a.entries.end()) best = x->second->last_seen_t;
      if (auto x = b.entries.find(id); x != b.entries.end())
        best = std::max(best, x->second->last_seen_t);
      EXPECT_EQ(e->last_seen_t, best);
    }
  }
}

TEST(ObsStore, RepeatedRoundChangesNothingAtSteadyState) {
  KnowledgeNetwork net;
  const auto frame = line_frame(5, 700.0, 0);
  net.begin_second(frame);
  for (int r = 0; r < 5; ++r) net.broadcast_round(frame, 800.0);
  const auto before = net.bases();
  net.broadcast_round(frame, 800.0);
  EXPECT_EQ(net.bases(), before);
}

TEST(ObsStore, StaleEntriesAreEvicted) {
  KnowledgeNetwork net({3, 5});
  net.advance_second(line_frame(2, 700.0, 0), 800.0, 1);
  EXPECT_TRUE(net.base(0).find(1));
  for (int t = 1; t <= 5; ++t) net.advance_second(line_frame(2, 5000.0, t), 800.0, 1);
  EXPECT_FALSE(net.base(0).find(1));
  EXPECT_EQ(net.base(0).find(0)->history.size(), 5u);
}

TEST(ObsStore, WarmupSeconds) {
  EXPECT_EQ(warmup_seconds(10, 1), 10);
  EXPECT_EQ(warmup_seconds(10, 4), 3);
  EXPECT_EQ(warmup_seconds(10, 2), 5);
}

TEST(EstimatedGraph, AllFreshEqualsTruth) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto frame = scattered_frame(25, 2000.0, 0, rng);
    KnowledgeNetwork net;
    net.advance_second(frame, 800.0, 25);
    const auto truth = build_comm_graph(frame, 800.0, 3, 0);
    const auto est = estimated_graph(net.base(0), nullptr, RoadNetwork{}, 800.0, 3);
    // Restrict the truth to the vehicles the owner knows about.
    std::vector<int> ids;
    std::vector<Vec2> pos;
    for (const auto& v : frame.vehicles)
      if (net.base(0).find(v.vehicle_id)) ids.push_back(v.vehicle_id), pos.push_back(v.position);
    const auto known = build_comm_graph(ids, pos, 800.0, 3, 0);
    EXPECT_EQ(est.node_ids, known.node_ids);
    EXPECT_EQ(est.neighbours, known.neighbours);
    EXPECT_EQ(est.features, known.features);
    EXPECT_EQ(ids.size() == frame.vehicles.size(), est.neighbours == truth.neighbours);
  }
}

TEST(EstimatedGraph, StationaryChainEqualsTruth) {
  KnowledgeNetwork net;
  for (int t = 0; t < 12; ++t) net.advance_second(line_frame(8, 700.0, t), 800.0, 1);
  const auto truth = build_comm_graph(line_frame(8, 700.0, 11), 800.0, 7, 0);
  const auto est = estimated_graph(net.base(0), nullptr, RoadNetwork{}, 800.0, 7);
  EXPECT_EQ(est.node_ids, truth.node_ids);
  EXPECT_EQ(est.neighbours, truth.neighbours);
  EXPECT_TRUE(reachability_check(est, 0, 7));
  EXPECT_FALSE(reachability_check(est, 0, 42));
}

TEST(EstimatedGraph, OwnerLinksOnlyToFreshEntries) {
  KnowledgeNetwork net;
  net.advance_second(line_frame(2, 100.0, 0), 800.0, 1);
  // Vehicle 1 leaves range; the owner still remembers it at a nearby spot.
  net.advance_second(line_frame(2, 5000.0, 1), 800.0, 1);
  const auto est = estimated_graph(net.base(0), nullptr, RoadNetwork{}, 800.0, 1);
  ASSERT_EQ(est.size(), 2u);
  EXPECT_TRUE(est.neighbours[0].empty());
  EXPECT_FALSE(reachability_check(est, 0, 1));
}

TEST(Reachability, MatchesBfsOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = testing_util::random_graph(12, 0.15, rng);
    EXPECT_EQ(reachability_check(g, 0, 11), bfs(g, 0, 11).has_value());
  }
}
