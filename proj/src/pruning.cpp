#include "trajaware/pruning.hpp"

#include <algorithm>
#include <random>

#include "trajaware/errors.hpp"

namespace trajaware {

namespace {

// Two-hop members (as graph indices) reachable through neighbour `nb`.
std::vector<int> reach_into(const CommGraph& g, int holder, int nb) {
  std::vector<int> out;
  for (int x : g.neighbours[nb])
    if (x != holder && !g.connected(holder, x)) out.push_back(x);
  return out;
}

}  // namespace

std::vector<int> rank_neighbours(const CommGraph& g, int holder_id) {
  const int h = g.require_index(holder_id);
  std::vector<std::pair<int, int>> scored;  // (links, vehicle id)
  for (int nb : g.neighbours[h])
    scored.emplace_back(static_cast<int>(reach_into(g, h, nb).size()), g.node_ids[nb]);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<int> ids;
  for (const auto& [links, id] : scored) ids.push_back(id);
  return ids;
}

PrunedActionSet prune_actions(const CommGraph& g, int holder_id, int k_max, std::uint64_t seed) {
  if (k_max < 1) throw ParameterError("k_max must be at least 1");
  const int h = g.require_index(holder_id);
  const auto ranked = rank_neighbours(g, holder_id);

  PrunedActionSet out;
  out.holder_id = holder_id;

  auto covered_by = [&](const std::vector<int>& ids) {
    std::set<int> c;
    for (int id : ids)
      for (int x : reach_into(g, h, g.require_index(id))) c.insert(g.node_ids[x]);
    return c;
  };

  if (static_cast<int>(ranked.size()) <= k_max) {
    out.retained = ranked;
    out.covered_two_hop = covered_by(out.retained);
    return out;
  }

  // Greedy pass in rank order: keep a neighbour only if it reaches a
  // two-hop node nobody kept so far reaches.
  std::vector<int> greedy;
  std::set<int> covered;
  for (int id : ranked) {
    bool adds = false;
    for (int x : reach_into(g, h, g.require_index(id)))
      if (covered.insert(g.node_ids[x]).second) adds = true;
    if (adds) greedy.push_back(id);
  }

  std::vector<int> keep;
  if (static_cast<int>(greedy.size()) <= k_max) {
    keep = greedy;
    // Top up with the best-ranked neighbours the greedy pass dropped.
    for (int id : ranked) {
      if (static_cast<int>(keep.size()) == k_max) break;
      if (std::find(keep.begin(), keep.end(), id) == keep.end()) keep.push_back(id);
    }
  } else {
    // Drop kept neighbours made redundant by later picks, lowest rank first.
    for (auto it = greedy.rbegin(); it != greedy.rend() && static_cast<int>(greedy.size()) > k_max;) {
      std::vector<int> others;
      for (int id : greedy)
        if (id != *it) others.push_back(id);
      if (covered_by(others).size() == covered.size()) {
        greedy = std::move(others);
        it = greedy.rbegin();
      } else {
        ++it;
      }
    }
    keep = greedy;
    if (static_cast<int>(keep.size()) > k_max) {
      std::mt19937_64 rng(seed);
      std::shuffle(keep.begin(), keep.end(), rng);
      keep.resize(k_max);
      out.coverage_lost = true;
    } else {
      for (int id : ranked) {
        if (static_cast<int>(keep.size()) == k_max) break;
        if (std::find(keep.begin(), keep.end(), id) == keep.end()) keep.push_back(id);
      }
    }
  }

  for (int id : ranked)
    if (std::find(keep.begin(), keep.end(), id) != keep.end()) out.retained.push_back(id);
  out.covered_two_hop = covered_by(out.retained);
  return out;
}

PrunedActionSet unpruned_actions(const CommGraph& g, int holder_id, int slots) {
  const int h = g.require_index(holder_id);
  PrunedActionSet out;
  out.holder_id = holder_id;
  for (int nb : g.neighbours[h]) out.retained.push_back(g.node_ids[nb]);
  std::sort(out.retained.begin(), out.retained.end());
  if (static_cast<int>(out.retained.size()) > slots) out.retained.resize(slots);
  for (int id : out.retained)
    for (int x : reach_into(g, h, g.require_index(id))) out.covered_two_hop.insert(g.node_ids[x]);
  return out;
}

DegreeHistograms degree_histogram(const std::vector<TraceFrame>& traces, double comm_range,
                                  int k_max) {
  if (traces.empty()) throw ParameterError("degree_histogram needs at least one frame");
  DegreeHistograms h;
  for (const auto& frame : traces) {
    if (frame.vehicles.empty()) continue;
    const int any = frame.vehicles.front().vehicle_id;
    const auto g = build_comm_graph(frame, comm_range, any, any);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ++h.before[g.degree(static_cast<int>(i))];
      const auto pruned = prune_actions(g, g.node_ids[i], k_max, frame.time_step);
      ++h.after[static_cast<int>(pruned.retained.size())];
    }
  }
  return h;
}

}  // namespace trajaware
