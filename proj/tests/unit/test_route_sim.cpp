#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>

#include "../common/test_util.hpp"
#include "trajaware/errors.hpp"
#include "trajaware/route_sim.hpp"

using namespace trajaware;

namespace {

// A straight two-way road along y = 0 from x = 0 to 20 km.
RoadNetwork tiny_map() {
  std::vector<SegmentNode> nodes;
  std::vector<Segment> segs;
  for (int i = 0; i <= 100; ++i) {
    nodes.push_back({i, {200.0 * i, 0.0}});
    if (i > 0) segs.push_back({i - 1, i}), segs.push_back({i, i - 1});
  }
  return RoadNetwork(nodes, segs, {0, 100}, {20000.0, 10000.0});
}

// The same vehicles at the same positions for `frames` seconds.
Trace static_trace(const std::vector<Vec2>& pos, int frames) {
  Trace tr;
  for (int t = 0; t < frames; ++t) {
    TraceFrame f;
    f.time_step = t;
    for (std::size_t i = 0; i < pos.size(); ++i)
      f.vehicles.push_back({static_cast<int>(i), pos[i], 0.0, {0}});
    tr.push_back(std::move(f));
  }
  return tr;
}

std::vector<Vec2> chain(int n, double spacing = 700.0) {
  std::vector<Vec2> p;
  for (int i = 0; i < n; ++i) p.push_back({spacing * i, 0.0});
  return p;
}

// Always relays to a fixed vehicle.
class FixedPolicy : public RoutingPolicy {
 public:
  explicit FixedPolicy(int next) : next_(next) {}
  Decision decide(const CommGraph&, int, int, std::mt19937_64&, std::uint64_t) const override {
    return {next_, 0, nullptr};
  }

 private:
  int next_;
};

EpisodeResult result(bool delivered, int hops, int shortest) {
  EpisodeResult r;
  r.delivered = delivered;
  r.hops_used = hops;
  r.shortest_at_send = shortest;
  r.ttl = 20;
  finalise_metrics(r);
  return r;
}

}  // namespace

TEST(StepPacket, AdjacentDestinationDeliversWithoutPolicy) {
  const auto g = testing_util::graph_from_edges(3, {{0, 1}, {1, 2}});
  Packet p;
  p.holder = 0;
  p.destination = 1;
  p.hops_used = 3;
  LinkLoad loads;
  std::mt19937_64 rng(1);
  StepContext ctx;
  ctx.truth = &g;
  ctx.rng = &rng;  // no policy: a call would crash
  const auto rec = step_packet(p, ctx, loads);
  EXPECT_EQ(rec.outcome, HopOutcome::Delivered);
  EXPECT_EQ(p.hops_used, 4);
  EXPECT_EQ(rec.decision.next_hop, -1);
}

TEST(StepPacket, TtlDropAtTwenty) {
  const auto g = testing_util::graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  OraclePolicy oracle;
  Packet p;
  p.holder = 0;
  p.destination = 3;
  p.hops_used = 19;
  LinkLoad loads;
  std::mt19937_64 rng(1);
  StepContext ctx{&g, {}, &oracle, CongestionMode::Off, &rng, 0, 0};
  EXPECT_EQ(step_packet(p, ctx, loads).outcome, HopOutcome::DroppedTtl);
  EXPECT_EQ(p.hops_used, 20);

  Packet q = p;
  q.holder = 0;
  q.hops_used = 18;
  EXPECT_EQ(step_packet(q, ctx, loads).outcome, HopOutcome::Relayed);
}

TEST(StepPacket, CongestionLedger) {
  const auto g = testing_util::graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  OraclePolicy oracle;
  LinkLoad loads;
  std::mt19937_64 rng(1);
  StepContext ctx{&g, {}, &oracle, CongestionMode::On, &rng, 0, 0};
  Packet a, b;
  a.holder = b.holder = 0;
  a.destination = b.destination = 3;
  a.size = b.size = 0.6;
  EXPECT_EQ(step_packet(a, ctx, loads).outcome, HopOutcome::Relayed);
  EXPECT_EQ(step_packet(b, ctx, loads).outcome, HopOutcome::CongestionWait);
  EXPECT_EQ(b.holder, 0);
  EXPECT_EQ(b.hops_used, 1);
  EXPECT_EQ(b.waits, 1);
  EXPECT_DOUBLE_EQ(loads.residual(1, 0), 0.4);

  // Random loads never oversubscribe a link.
  std::uniform_real_distribution<double> size(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rg = testing_util::random_graph(10, 0.4, rng);
    LinkLoad l;
    StepContext c{&rg, {}, &oracle, CongestionMode::On, &rng, 0, 0};
    for (int k = 0; k < 30; ++k) {
      Packet p;
      p.holder = static_cast<int>(rng() % 10);
      p.destination = static_cast<int>(rng() % 10);
      p.size = 1.0 - size(rng);
      if (p.holder == p.destination || rg.degree(p.holder) == 0) continue;
      step_packet(p, c, l);
    }
    EXPECT_LE(l.max_booked(), 1.0 + 1e-12);
  }
}

TEST(StepPacket, LostVehiclesAndIllegalChoices) {
  const auto g = testing_util::graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  LinkLoad loads;
  std::mt19937_64 rng(1);
  FixedPolicy bad(3);
  StepContext ctx{&g, {}, &bad, CongestionMode::Off, &rng, 0, 0};
  Packet p;
  p.holder = 9;
  p.destination = 3;
  EXPECT_EQ(step_packet(p, ctx, loads).outcome, HopOutcome::DroppedHolderLost);
  p.holder = 0;
  p.destination = 9;
  EXPECT_EQ(step_packet(p, ctx, loads).outcome, HopOutcome::DroppedDestinationLost);
  p.destination = 2;
  EXPECT_THROW(step_packet(p, ctx, loads), ConsistencyError);
}

TEST(Metrics, CaseSplitAndSummary) {
  const auto dropped = result(false, 20, 4);
  EXPECT_FALSE(dropped.spr.has_value());
  EXPECT_EQ(dropped.pspr, 5.0);
  const auto ok = result(true, 6, 4);
  EXPECT_EQ(*ok.spr, 1.5);
  EXPECT_EQ(ok.pspr, 1.5);

  std::vector<EpisodeResult> rs{result(true, 2, 2), result(true, 3, 3), result(true, 4, 2),
                                dropped};
  const auto s = summarise(rs);
  EXPECT_EQ(s.rr, 0.75);
  EXPECT_DOUBLE_EQ(s.avg_spr, (1.0 + 1.0 + 2.0) / 3.0);
  EXPECT_DOUBLE_EQ(s.avg_pspr, (1.0 + 1.0 + 2.0 + 5.0) / 4.0);
  EXPECT_THROW(summarise(std::vector<EpisodeResult>{}), ParameterError);
}

TEST(RunEpisode, OracleOnStaticGraphIsOptimal) {
  const auto map = tiny_map();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 4000.0);
  std::vector<Vec2> pos;
  for (int i = 0; i < 60; ++i) pos.push_back({u(rng), u(rng)});
  const auto trace = static_trace(pos, 60);
  const World w{&map, &trace};
  const auto ev = evaluate(w, OraclePolicy{}, 100, SimOptions{}, 5);
  EXPECT_EQ(ev.summary.rr, 1.0);
  EXPECT_EQ(ev.summary.avg_spr, 1.0);
  EXPECT_EQ(ev.summary.avg_pspr, 1.0);
  for (const auto& e : ev.episodes) EXPECT_EQ(e.hops_used, e.shortest_at_send);
}

TEST(RunEpisode, ChainHopsAndTtl) {
  const auto map = tiny_map();
  const auto trace = static_trace(chain(25), 60);
  const World w{&map, &trace};
  SimOptions o;
  auto r = run_episode(w, {5, 0, 5}, OraclePolicy{}, o, 1);
  EXPECT_TRUE(r.delivered);
  EXPECT_EQ(r.hops_used, 5);
  EXPECT_EQ(r.hops.size(), 5u);
  EXPECT_EQ(r.hops.back().outcome, HopOutcome::Delivered);

  r = run_episode(w, {5, 0, 24}, OraclePolicy{}, o, 1);
  EXPECT_FALSE(r.delivered);
  EXPECT_EQ(r.outcome, HopOutcome::DroppedTtl);
  EXPECT_EQ(r.hops_used, 20);
  EXPECT_DOUBLE_EQ(r.pspr, 20.0 / 24.0);

  r = run_episode(w, {5, 0, 0}, OraclePolicy{}, o, 1);
  EXPECT_TRUE(r.skipped);
  EXPECT_THROW(run_episode(w, {50, 0, 3}, OraclePolicy{}, o, 1), ParameterError);
}

TEST(RunEpisode, PartialObservationDropsUnknownDestination) {
  const auto map = tiny_map();
  const auto trace = static_trace(chain(12), 60);
  const World w{&map, &trace};
  SimOptions o;
  o.observation = Observation::Partial;
  o.broadcast_f = 1;
  o.warmup_rounds = 1;
  const auto still = Predictor::zeros({});
  o.predictor = &still;
  const auto r = run_episode(w, {5, 0, 11}, OraclePolicy{}, o, 1);
  EXPECT_EQ(r.outcome, HopOutcome::DroppedUnreachable);
  EXPECT_EQ(r.hops.size(), 1u);
  EXPECT_DOUBLE_EQ(r.pspr, 20.0 / 11.0);

  // With enough warm-up the whole chain is known and the oracle delivers.
  o.warmup_rounds = 20;
  const auto ok = run_episode(w, {25, 0, 11}, OraclePolicy{}, o, 1);
  EXPECT_TRUE(ok.delivered);
  EXPECT_EQ(ok.hops_used, 11);
}

TEST(Evaluate, DeterministicAndThreadInvariant) {
  const auto sw = testing_util::small_world(3, 200);
  const World w{&sw.map, &sw.trace};
  SimOptions o;
  o.congestion = CongestionMode::On;
  const RandomPolicy random;
  ::setenv("TRAJAWARE_THREADS", "1", 1);
  const auto a = evaluate(w, random, 60, o, 11);
  const auto b = evaluate(w, random, 60, o, 11);
  ::setenv("TRAJAWARE_THREADS", "3", 1);
  const auto c = evaluate(w, random, 60, o, 11);
  ::unsetenv("TRAJAWARE_THREADS");
  ASSERT_EQ(a.episodes.size(), c.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].hops_used, b.episodes[i].hops_used);
    EXPECT_EQ(a.episodes[i].hops_used, c.episodes[i].hops_used);
    EXPECT_EQ(a.episodes[i].outcome, c.episodes[i].outcome);
    EXPECT_EQ(a.episodes[i].pspr, c.episodes[i].pspr);
  }
  EXPECT_EQ(summary_json(a.summary), summary_json(c.summary));
  const auto s = a.summary;
  EXPECT_GE(s.rr, 0.0);
  EXPECT_LE(s.rr, 1.0);
}

TEST(Evaluate, SampledEpisodesRespectFloor) {
  const auto sw = testing_util::small_world(4, 150);
  const World w{&sw.map, &sw.trace};
  SimOptions o;
  o.min_shortest = 2;
  const auto specs = sample_episodes(w, 50, o, 3);
  ASSERT_EQ(specs.size(), 50u);
  const auto again = sample_episodes(w, 50, o, 3);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(specs[i].start_t, again[i].start_t);
    EXPECT_EQ(specs[i].source, again[i].source);
    const auto& f = w.frame(specs[i].start_t);
    const auto g = build_comm_graph(f, o.comm_range, specs[i].destination, specs[i].source);
    const auto hops = hop_vector(g, g.holder_index)[g.destination_index];
    ASSERT_TRUE(hops.has_value());
    EXPECT_GE(*hops, 2);
  }
}

TEST(Results, CsvHeader) {
  testing_util::TempDir dir("results");
  std::vector<EpisodeResult> rs{result(true, 2, 2), result(false, 20, 4)};
  write_results_csv(dir / "r.csv", rs);
  std::ifstream in(dir / "r.csv");
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "episode,src,dst,shortest,hops,outcome,spr,pspr");
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  EXPECT_EQ(rows, 2);
}
