#pragma once

// The routing Q-network: pruned local graph -> GraphSAGE -> retained
// neighbour rows attend over all node rows -> zero-padded, flattened ->
// fully connected head with one Q-value per action slot.

#include <cstdint>
#include <random>
#include <vector>

#include "trajaware/comm_graph.hpp"
#include "trajaware/layers.hpp"
#include "trajaware/pruning.hpp"

namespace trajaware {

struct QNetConfig {
  int k_max = kDefaultKMax;
  /// Action slots when pruning is disabled.
  int unpruned_slots = 32;
  bool use_pruning = true;
  bool use_attention = true;
  int sage_layers = 2;
  int hidden = 64;
  int d_h = 64;
  int heads = 1;
  /// Concatenate every GraphSAGE layer's output instead of using the last.
  bool concat_layers = false;

  int slots() const { return use_pruning ? k_max : unpruned_slots; }
  int embedding_width() const { return concat_layers ? hidden * sage_layers : hidden; }
};

struct QNetParams {
  QNetConfig config;
  nn::GraphSageParams sage;
  nn::CrossAttentionParams attention;  // used when config.use_attention
  nn::DenseParams bridge;              // holder embedding -> d_h otherwise
  nn::DenseParams head;

  static QNetParams init(const QNetConfig& config, std::uint64_t seed);
  nn::NamedParams named() const;
  QNetParams clone() const;
};

struct PolicyState {
  CommGraph graph;
  int holder = 0;
  int destination = 0;
  PrunedActionSet pruned;
};

/// Builds the state for `holder`: re-labels roles, recomputes features and
/// applies pruning (or the unpruned action list) per the config.
PolicyState make_policy_state(CommGraph graph, int holder, int destination,
                              const QNetConfig& config, std::uint64_t prune_seed);

/// What the network reads from a PolicyState, without positions and with
/// the (already pruned) adjacency in CSR form. Used for replay memory.
struct StateSnapshot {
  std::vector<int> node_ids;
  std::vector<double> features;
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint16_t> adjacency;
  int holder_index = -1;
  int destination_index = -1;
  int holder = 0;
  int destination = 0;
  std::vector<int> retained;
};

StateSnapshot snapshot_of(const PolicyState& state, const QNetConfig& config);
/// A PolicyState that yields the same Q-values as the one snapshotted.
PolicyState restore(const StateSnapshot& snap);

struct QOutput {
  std::vector<double> q_values;
  std::vector<bool> valid_mask;
  std::vector<int> action_ids;  // -1 for padded slots

  int valid_count() const;
};

/// Adjacency fed to GraphSAGE: holder edges to pruned-away neighbours removed.
std::vector<std::vector<int>> local_adjacency(const PolicyState& state, const QNetConfig& config);

/// GraphSAGE node embeddings, [n, embedding_width].
nn::Tensor node_embeddings(const PolicyState& state, const QNetParams& params);

/// Attention rows for the retained neighbours, [|retained|, d_h], in
/// retained order.
nn::Tensor attention_stage(const PolicyState& state, const QNetParams& params);

/// Raw Q-values as a [1, slots] tensor (differentiable).
nn::Tensor q_values_tensor(const PolicyState& state, const QNetParams& params);

/// Throws NoActionError when nothing is retained.
QOutput q_forward(const PolicyState& state, const QNetParams& params);

/// Epsilon-greedy slot index among valid slots; ties go to the lowest index.
int select_action_index(const QOutput& q, double epsilon, std::mt19937_64& rng);
/// Seeded convenience form returning the chosen vehicle id.
int select_action(const QOutput& q, double epsilon, std::uint64_t rng_seed);

/// Greedy max over valid Q-values.
double max_valid_q(const QOutput& q);

}  // namespace trajaware
