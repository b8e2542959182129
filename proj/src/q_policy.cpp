#include "trajaware/q_policy.hpp"

#include <algorithm>
#include <limits>

#include "trajaware/errors.hpp"

namespace trajaware {

QNetParams QNetParams::init(const QNetConfig& config, std::uint64_t seed) {
  if (config.k_max < 1 || config.unpruned_slots < 1 || config.sage_layers < 1 ||
      config.hidden < 1 || config.d_h < 1 || config.heads < 1)
    throw ParameterError("Q-network dimensions must be positive");
  std::mt19937_64 rng(seed);
  QNetParams p;
  p.config = config;
  std::size_t in = kNodeFeatures;
  for (int l = 0; l < config.sage_layers; ++l) {
    p.sage.layers.push_back(nn::GraphSageLayerParams::init(in, config.hidden, rng));
    in = config.hidden;
  }
  const std::size_t emb = config.embedding_width();
  const std::size_t slots = config.slots();
  if (config.use_attention) {
    p.attention = nn::CrossAttentionParams::init(emb, config.d_h, config.heads, rng);
    p.head = nn::DenseParams::init(slots * config.d_h, slots, rng);
  } else {
    p.bridge = nn::DenseParams::init(emb, config.d_h, rng);
    p.head = nn::DenseParams::init(config.d_h, slots, rng);
  }
  return p;
}

nn::NamedParams QNetParams::named() const {
  nn::NamedParams out;
  for (std::size_t l = 0; l < sage.layers.size(); ++l)
    sage.layers[l].collect("sage." + std::to_string(l), out);
  if (config.use_attention)
    attention.collect("attention", out);
  else
    bridge.collect("bridge", out);
  head.collect("head", out);
  return out;
}

QNetParams QNetParams::clone() const {
  QNetParams copy = init(config, 0);
  nn::copy_values(named(), copy.named());
  return copy;
}

PolicyState make_policy_state(CommGraph graph, int holder, int destination,
                              const QNetConfig& config, std::uint64_t prune_seed) {
  PolicyState s;
  s.holder = holder;
  s.destination = destination;
  graph.holder_index = graph.require_index(holder);
  graph.destination_index = graph.index_of(destination).value_or(-1);
  compute_features(graph);
  s.graph = std::move(graph);
  s.pruned = config.use_pruning ? prune_actions(s.graph, holder, config.k_max, prune_seed)
                                : unpruned_actions(s.graph, holder, config.unpruned_slots);
  return s;
}

StateSnapshot snapshot_of(const PolicyState& state, const QNetConfig& config) {
  const auto& g = state.graph;
  if (g.size() > 0xffff) throw UsageError("graph too large to snapshot");
  StateSnapshot s;
  s.node_ids = g.node_ids;
  s.features = g.features;
  s.holder_index = g.holder_index;
  s.destination_index = g.destination_index;
  s.holder = state.holder;
  s.destination = state.destination;
  s.retained = state.pruned.retained;
  s.offsets.push_back(0);
  for (const auto& nb : local_adjacency(state, config)) {
    for (int j : nb) s.adjacency.push_back(static_cast<std::uint16_t>(j));
    s.offsets.push_back(static_cast<std::uint32_t>(s.adjacency.size()));
  }
  return s;
}

PolicyState restore(const StateSnapshot& snap) {
  PolicyState s;
  s.holder = snap.holder;
  s.destination = snap.destination;
  auto& g = s.graph;
  g.node_ids = snap.node_ids;
  g.positions.assign(snap.node_ids.size(), Vec2{});
  g.features = snap.features;
  g.holder_index = snap.holder_index;
  g.destination_index = snap.destination_index;
  g.neighbours.resize(snap.node_ids.size());
  for (std::size_t i = 0; i < g.neighbours.size(); ++i)
    g.neighbours[i].assign(snap.adjacency.begin() + snap.offsets[i],
                           snap.adjacency.begin() + snap.offsets[i + 1]);
  s.pruned.holder_id = snap.holder;
  s.pruned.retained = snap.retained;
  return s;
}

int QOutput::valid_count() const {
  return static_cast<int>(std::count(valid_mask.begin(), valid_mask.end(), true));
}

std::vector<std::vector<int>> local_adjacency(const PolicyState& state, const QNetConfig& config) {
  auto nb = state.graph.neighbours;
  if (!config.use_pruning) return nb;
  const int h = state.graph.holder_index;
  std::vector<int> keep;
  for (int id : state.pruned.retained) keep.push_back(state.graph.require_index(id));
  std::sort(keep.begin(), keep.end());
  for (int x : state.graph.neighbours[h]) {
    if (std::binary_search(keep.begin(), keep.end(), x)) continue;
    auto& back = nb[x];
    back.erase(std::remove(back.begin(), back.end(), h), back.end());
  }
  nb[h] = keep;
  return nb;
}

nn::Tensor node_embeddings(const PolicyState& state, const QNetParams& params) {
  const auto& g = state.graph;
  const auto adjacency = local_adjacency(state, params.config);
  nn::Tensor x = nn::Tensor::from({g.size(), kNodeFeatures}, g.features);
  nn::Tensor concat;
  for (const auto& layer : params.sage.layers) {
    x = nn::graphsage_layer(x, adjacency, layer);
    if (params.config.concat_layers) concat = concat.defined() ? nn::concat_cols(concat, x) : x;
  }
  return params.config.concat_layers ? concat : x;
}

namespace {
std::vector<int> retained_rows(const PolicyState& state) {
  std::vector<int> rows;
  for (int id : state.pruned.retained) rows.push_back(state.graph.require_index(id));
  return rows;
}
}  // namespace

nn::Tensor attention_stage(const PolicyState& state, const QNetParams& params) {
  if (!params.config.use_attention) throw UsageError("attention_stage on a no-attention network");
  if (state.pruned.retained.empty()) throw NoActionError("no retained neighbours");
  const nn::Tensor emb = node_embeddings(state, params);
  const auto rows = retained_rows(state);
  return nn::cross_attention(nn::gather_rows(emb, rows), emb, params.attention);
}

nn::Tensor q_values_tensor(const PolicyState& state, const QNetParams& params) {
  const auto& cfg = params.config;
  const std::size_t slots = cfg.slots();
  if (state.pruned.retained.empty()) throw NoActionError("no retained neighbours");
  if (state.pruned.retained.size() > slots)
    throw UsageError("more retained neighbours than action slots");
  if (cfg.use_attention) {
    const nn::Tensor att = attention_stage(state, params);
    std::vector<int> pad(slots, -1);
    for (std::size_t i = 0; i < state.pruned.retained.size(); ++i) pad[i] = static_cast<int>(i);
    const nn::Tensor padded = nn::gather_rows(att, pad);
    const nn::Tensor flat = nn::reshape(padded, {1, slots * static_cast<std::size_t>(cfg.d_h)});
    return nn::dense(flat, params.head);
  }
  const nn::Tensor emb = node_embeddings(state, params);
  const int h = state.graph.holder_index;
  const nn::Tensor holder = nn::gather_rows(emb, std::vector<int>{h});
  return nn::dense(nn::relu(nn::dense(holder, params.bridge)), params.head);
}

QOutput q_forward(const PolicyState& state, const QNetParams& params) {
  nn::NoGradGuard no_grad;
  const nn::Tensor q = q_values_tensor(state, params);
  const std::size_t slots = params.config.slots();
  QOutput out;
  out.q_values.assign(q.data().begin(), q.data().end());
  out.valid_mask.assign(slots, false);
  out.action_ids.assign(slots, -1);
  for (std::size_t i = 0; i < state.pruned.retained.size(); ++i) {
    out.valid_mask[i] = true;
    out.action_ids[i] = state.pruned.retained[i];
  }
  return out;
}

int select_action_index(const QOutput& q, double epsilon, std::mt19937_64& rng) {
  std::vector<int> valid;
  for (std::size_t i = 0; i < q.valid_mask.size(); ++i)
    if (q.valid_mask[i]) valid.push_back(static_cast<int>(i));
  if (valid.empty()) throw NoActionError("no valid action to select");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    return valid[pick(rng)];
  }
  int best = valid.front();
  double best_q = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.q_values.size(); ++i) {
    const double v = q.valid_mask[i] ? q.q_values[i] : -std::numeric_limits<double>::infinity();
    if (v > best_q) {
      best_q = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int select_action(const QOutput& q, double epsilon, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  return q.action_ids.at(select_action_index(q, epsilon, rng));
}

double max_valid_q(const QOutput& q) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.q_values.size(); ++i)
    if (q.valid_mask[i]) best = std::max(best, q.q_values[i]);
  if (!std::isfinite(best)) throw NoActionError("no valid action");
  return best;
}

}  // namespace trajaware
