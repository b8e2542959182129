#pragma once

// Greedy action-space pruning: keep at most k_max direct neighbours of the
// packet holder while preserving reachability of its two-hop neighbours.

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "trajaware/comm_graph.hpp"

namespace trajaware {

inline constexpr int kDefaultKMax = 8;

struct PrunedActionSet {
  int holder_id = 0;
  /// Retained neighbour ids in rank order (most two-hop links first,
  /// ties by ascending id).
  std::vector<int> retained;
  std::set<int> covered_two_hop;
  /// Set when the greedy cover alone needed more than k_max neighbours.
  bool coverage_lost = false;
};

/// Neighbour ids of the holder ranked by their number of links into the
/// holder's two-hop set (descending, ties by ascending id).
std::vector<int> rank_neighbours(const CommGraph& g, int holder_id);

PrunedActionSet prune_actions(const CommGraph& g, int holder_id, int k_max, std::uint64_t seed);

/// No pruning: every neighbour in ascending id order, truncated to `slots`.
PrunedActionSet unpruned_actions(const CommGraph& g, int holder_id, int slots);

struct DegreeHistograms {
  std::map<int, long> before;
  std::map<int, long> after;
};

/// Per-vehicle-per-frame degree counts before and after pruning.
DegreeHistograms degree_histogram(const std::vector<TraceFrame>& traces, double comm_range,
                                  int k_max);

}  // namespace trajaware
