#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <numeric>

#include "../common/test_util.hpp"
#include "trajaware/errors.hpp"
#include "trajaware/road_world.hpp"

using namespace trajaware;
using trajaware::testing_util::TempDir;

namespace {

bool connected_by_union_find(const RoadNetwork& m) {
  std::map<int, int> parent;
  for (const auto& n : m.nodes()) parent[n.id] = n.id;
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const auto& s : m.segments()) parent[find(s.from)] = find(s.to);
  std::set<int> roots;
  for (const auto& n : m.nodes()) roots.insert(find(n.id));
  return roots.size() == 1;
}

bool on_planned_path(const RoadNetwork& m, const VehicleState& v) {
  const int head = v.planned_path.front();
  for (std::size_t s : m.incoming(head))
    if (distance_to_segment(v.position, m.position(m.segments()[s].from), m.position(head)) <= 1e-6)
      return true;
  return false;
}

}  // namespace

TEST(RoadWorld, UnperturbedTwoByTwoGrid) {
  const RoadNetwork m = generate_map(1, 2, 2, 1000.0, 0.0);
  ASSERT_EQ(m.junction_ids().size(), 4u);
  std::set<std::pair<double, double>> corners;
  for (int j : m.junction_ids()) corners.insert({m.position(j).x, m.position(j).y});
  EXPECT_EQ(corners, (std::set<std::pair<double, double>>{{0, 0}, {1000, 0}, {0, 1000}, {1000, 1000}}));
  // Four boundary roads of 1000 m, each split into five 200 m pieces, both directions.
  EXPECT_EQ(m.segments().size(), 4u * 5u * 2u);
  double total = 0.0;
  for (std::size_t s = 0; s < m.segments().size(); ++s) total += m.segment_length(s);
  EXPECT_NEAR(total, 2.0 * 4000.0, 1e-9);
}

TEST(RoadWorld, PerturbedMapIsConnectedWithShortSegments) {
  const RoadNetwork m = generate_map(7, 8, 8, 800.0, 0.3);
  EXPECT_TRUE(connected_by_union_find(m));
  for (std::size_t s = 0; s < m.segments().size(); ++s) {
    EXPECT_GT(m.segment_length(s), 0.0);
    EXPECT_LE(m.segment_length(s), kMaxSegmentLength + 1e-9);
  }
}

TEST(RoadWorld, GenerationIsDeterministic) {
  const RoadNetwork a = generate_map(9, 5, 4, 300.0, 0.5);
  const RoadNetwork b = generate_map(9, 5, 4, 300.0, 0.5);
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) {
    EXPECT_EQ(a.nodes()[i].id, b.nodes()[i].id);
    EXPECT_EQ(a.nodes()[i].position, b.nodes()[i].position);
  }
  const double density = calibrate_density(a, 40.0);
  EXPECT_EQ(generate_traffic(a, 4, 60, density), generate_traffic(b, 4, 60, density));
}

TEST(RoadWorld, InvalidDimensionsRejected) {
  EXPECT_THROW(generate_map(1, 1, 5, 100.0, 0.0), ParameterError);
  EXPECT_THROW(generate_map(1, 3, 3, 0.0, 0.0), ParameterError);
  EXPECT_THROW(generate_map(1, 3, 3, 100.0, 1.5), ParameterError);
}

TEST(RoadWorld, NetworkInvariantsValidated) {
  std::vector<SegmentNode> nodes{{0, {0, 0}}, {1, {100, 0}}, {2, {500, 0}}};
  EXPECT_THROW(RoadNetwork(nodes, {{0, 1}, {1, 2}}, {0, 2}, {500, 1}), ValidationError);  // 400 m
  EXPECT_THROW(RoadNetwork(nodes, {{0, 1}, {1, 7}}, {0}, {500, 1}), ValidationError);
  EXPECT_THROW(RoadNetwork(nodes, {{0, 1}}, {0}, {500, 1}), ValidationError);  // node 2 isolated
  std::vector<SegmentNode> dup{{0, {0, 0}}, {0, {1, 0}}};
  EXPECT_THROW(RoadNetwork(dup, {}, {}, {1, 1}), ValidationError);
}

TEST(RoadWorld, ZeroDensityGivesEmptyFrames) {
  const RoadNetwork m = generate_map(1, 3, 3, 300.0, 0.0);
  const Trace t = generate_traffic(m, 1, 10, 0.0);
  ASSERT_EQ(t.size(), 10u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t[i].time_step, static_cast<int>(i));
    EXPECT_TRUE(t[i].vehicles.empty());
  }
}

TEST(RoadWorld, CalibratedTrafficStaysInBand) {
  const RoadNetwork m = generate_map(3, 8, 8, 400.0, 0.3);
  const Trace t = generate_traffic(m, 3, 500, calibrate_density(m, 55.0));
  int in_band = 0;
  for (const auto& f : t)
    if (f.vehicles.size() >= 40 && f.vehicles.size() <= 70) ++in_band;
  EXPECT_GE(in_band, static_cast<int>(0.9 * t.size()));
}

TEST(RoadWorld, TrafficInvariants) {
  const auto w = testing_util::small_world(2, 200);
  std::map<int, VehicleState> last;
  for (std::size_t f = 0; f < w.trace.size(); ++f) {
    const auto& frame = w.trace[f];
    if (f) {
      EXPECT_GT(frame.time_step, w.trace[f - 1].time_step);
    }
    std::set<int> ids;
    for (const auto& v : frame.vehicles) {
      EXPECT_TRUE(ids.insert(v.vehicle_id).second);
      EXPECT_GE(v.speed, 0.0);
      EXPECT_LE(w.map.distance_to_network(v.position), 1e-6);
      ASSERT_FALSE(v.planned_path.empty());
      EXPECT_TRUE(on_planned_path(w.map, v));
      for (std::size_t i = 0; i + 1 < v.planned_path.size(); ++i)
        EXPECT_NE(w.map.find_segment(v.planned_path[i], v.planned_path[i + 1]), RoadNetwork::npos);
      auto it = last.find(v.vehicle_id);
      if (it != last.end()) {
        EXPECT_LE(distance(it->second.position, v.position), v.speed + 1e-6);
      }
    }
    last.clear();
    for (const auto& v : frame.vehicles) last[v.vehicle_id] = v;
  }
}

TEST(RoadWorld, NextTwoSegmentNodes) {
  std::vector<SegmentNode> nodes{{1, {0, 0}}, {5, {100, 0}}, {9, {200, 0}}};
  const RoadNetwork m(nodes, {{1, 5}, {5, 1}, {5, 9}, {9, 5}}, {1, 9}, {200, 1});
  VehicleState v{1, {50, 0}, 10, {5, 9}};
  auto [a, b] = next_two_segment_nodes(m, v);
  EXPECT_EQ(a.id, 5);
  EXPECT_EQ(b.id, 9);
  v.position = {150, 0};
  v.planned_path = {9};
  auto [c, d] = next_two_segment_nodes(m, v);
  EXPECT_EQ(c.id, 9);
  EXPECT_EQ(d.id, 9);
  v.position = {150, 30};
  EXPECT_THROW(next_two_segment_nodes(m, v), ConsistencyError);
}

TEST(RoadWorld, NextNodesLieAheadAcrossTrace) {
  const auto w = testing_util::small_world(4, 80);
  for (const auto& f : w.trace)
    for (const auto& v : f.vehicles) {
      auto [a, b] = next_two_segment_nodes(w.map, v);
      EXPECT_EQ(a.id, v.planned_path[0]);
      EXPECT_EQ(b.id, v.planned_path.size() > 1 ? v.planned_path[1] : v.planned_path[0]);
    }
}

TEST(RoadWorld, MapAndTraceRoundTrip) {
  TempDir dir("rw");
  const auto w = testing_util::small_world(5, 60);
  save_map(w.map, dir / "map.json");
  const RoadNetwork m = load_map(dir / "map.json");
  ASSERT_EQ(m.nodes().size(), w.map.nodes().size());
  EXPECT_EQ(m.bounds(), w.map.bounds());
  save_trace(w.map, w.trace, dir / "trace.csv");
  EXPECT_TRUE(std::filesystem::exists(dir / "trace.routes.json"));
  const Trace t = load_trace(dir / "trace.csv", m);
  ASSERT_EQ(t.size(), w.trace.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    ASSERT_EQ(t[i].time_step, w.trace[i].time_step);
    ASSERT_EQ(t[i].vehicles.size(), w.trace[i].vehicles.size()) << "frame " << i;
    for (std::size_t k = 0; k < t[i].vehicles.size(); ++k) {
      const auto& a = t[i].vehicles[k];
      const auto& b = w.trace[i].vehicles[k];
      ASSERT_EQ(a.vehicle_id, b.vehicle_id);
      ASSERT_EQ(a.position, b.position) << "vehicle " << a.vehicle_id << " frame " << i;
      ASSERT_EQ(a.speed, b.speed);
      ASSERT_EQ(a.planned_path, b.planned_path) << "vehicle " << a.vehicle_id << " frame " << i;
    }
  }
}

TEST(RoadWorld, EmptyTraceFileWithHeader) {
  TempDir dir("rw");
  const auto w = testing_util::small_world(5, 10);
  std::ofstream(dir / "t.csv") << "t,vehicle_id,x,y,speed\n";
  EXPECT_TRUE(load_trace(dir / "t.csv", w.map).empty());
}

TEST(RoadWorld, MalformedRowNamesLine) {
  TempDir dir("rw");
  const auto w = testing_util::small_world(5, 10);
  std::ofstream(dir / "t.csv") << "t,vehicle_id,x,y,speed\n0,1,abc,2,3\n";
  try {
    load_trace(dir / "t.csv", w.map);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(RoadWorld, OffNetworkPositionRejected) {
  TempDir dir("rw");
  std::vector<SegmentNode> nodes{{0, {0, 0}}, {1, {100, 0}}};
  const RoadNetwork m(nodes, {{0, 1}, {1, 0}}, {0, 1}, {100, 1});
  std::ofstream(dir / "t.csv") << "t,vehicle_id,x,y,speed\n0,1,50,3,1\n";
  std::ofstream(dir / "t.routes.json") << R"([{"vehicle_id":1,"depart_t":0,"node_ids":[0,1]}])";
  EXPECT_THROW(load_trace(dir / "t.csv", m), ValidationError);
}
