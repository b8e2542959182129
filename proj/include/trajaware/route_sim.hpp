#pragma once

// Hop-by-hop packet routing over a vehicle trace. One hop (relay or wait)
// takes one trace second. Metrics: SPR = hops / shortest for delivered
// packets, PSPR = SPR or ttl / shortest when dropped, RR = delivered / sent.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajaware/obs_store.hpp"
#include "trajaware/q_policy.hpp"

namespace trajaware {

inline constexpr int kDefaultTtl = 20;

enum class HopOutcome {
  Relayed,
  Delivered,
  DroppedTtl,
  DroppedUnreachable,
  CongestionWait,
  NoNeighbourWait,
  DroppedHolderLost,
  DroppedDestinationLost,
};

std::string_view outcome_name(HopOutcome o);
bool is_terminal(HopOutcome o);

enum class Observation { Complete, Partial };
enum class CongestionMode { Off, On };

std::string_view observation_name(Observation o);
std::string_view congestion_name(CongestionMode c);

struct Packet {
  int packet_id = 0;
  int source = 0;
  int destination = 0;
  int holder = 0;
  int hops_used = 0;
  int ttl = kDefaultTtl;
  double size = 1.0;
  int created_t = 0;
  int shortest_at_send = 0;
  int waits = 0;
};

/// Per-step booked size on undirected vehicle links.
struct LinkLoad {
  double capacity = 1.0;
  std::map<std::pair<int, int>, double> booked;

  double residual(int a, int b) const;
  void book(int a, int b, double size);
  void clear() { booked.clear(); }
  double max_booked() const;
};

struct Decision {
  int next_hop = -1;
  int action_index = -1;
  /// Set by policies that record their inputs for replay.
  std::shared_ptr<const StateSnapshot> state;
};

class RoutingPolicy {
 public:
  virtual ~RoutingPolicy() = default;
  /// Picks a direct neighbour of `holder` in `g` (which has at least one).
  /// Must be safe to call concurrently.
  virtual Decision decide(const CommGraph& g, int holder, int destination, std::mt19937_64& rng,
                          std::uint64_t prune_seed) const = 0;
};

/// Epsilon-greedy over the Q-network.
class QRoutingPolicy : public RoutingPolicy {
 public:
  QRoutingPolicy(const QNetParams& params, double epsilon, bool record)
      : params_(params), epsilon_(epsilon), record_(record) {}
  Decision decide(const CommGraph& g, int holder, int destination, std::mt19937_64& rng,
                  std::uint64_t prune_seed) const override;

 private:
  const QNetParams& params_;
  double epsilon_;
  bool record_;
};

/// Next hop on a BFS shortest path to the destination over all neighbours
/// (ties by lowest id); falls back to the neighbour nearest the destination
/// when it is unreachable.
class OraclePolicy : public RoutingPolicy {
 public:
  Decision decide(const CommGraph& g, int holder, int destination, std::mt19937_64& rng,
                  std::uint64_t prune_seed) const override;
};

/// Uniform over the pruned action set.
class RandomPolicy : public RoutingPolicy {
 public:
  explicit RandomPolicy(int k_max = kDefaultKMax) : k_max_(k_max) {}
  Decision decide(const CommGraph& g, int holder, int destination, std::mt19937_64& rng,
                  std::uint64_t prune_seed) const override;

 private:
  int k_max_;
};

struct World {
  const RoadNetwork* map = nullptr;
  const Trace* trace = nullptr;

  /// Frame at absolute time step t; throws LookupError outside the trace.
  const TraceFrame& frame(int t) const;
  int first_t() const;
  int last_t() const;
};

struct SimOptions {
  double comm_range = kDefaultCommRange;
  int ttl = kDefaultTtl;
  int k_max = kDefaultKMax;
  Observation observation = Observation::Complete;
  int broadcast_f = 4;
  int warmup_rounds = kDefaultWarmupRounds;
  KnowledgeOptions knowledge;
  CongestionMode congestion = CongestionMode::Off;
  int background_packets = 8;
  double link_capacity = 1.0;
  /// The environment's graph is recomputed every this many steps.
  int graph_refresh = 1;
  /// Shortest-path floor for sampled (src, dst) pairs.
  int min_shortest = 1;
  const Predictor* predictor = nullptr;  // partial observation

  void validate() const;
};

struct EpisodeSpec {
  int start_t = 0;
  int source = 0;
  int destination = 0;
};

struct HopRecord {
  int t = 0;
  HopOutcome outcome = HopOutcome::Relayed;
  int holder = 0;
  Decision decision;  // next_hop = -1 when no policy call happened
};

struct EpisodeResult {
  EpisodeSpec spec;
  bool skipped = false;
  std::string skip_reason;
  bool delivered = false;
  int hops_used = 0;
  int waits = 0;
  int shortest_at_send = 0;
  int ttl = kDefaultTtl;
  std::optional<double> spr;
  double pspr = 0.0;
  HopOutcome outcome = HopOutcome::Relayed;
  std::vector<HopRecord> hops;  // the measured packet's steps
};

/// Inputs to one hop of one packet.
struct StepContext {
  /// The environment's graph this step; must contain every vehicle alive.
  const CommGraph* truth = nullptr;
  /// The holder's own view under partial observation; null means `truth`.
  std::function<CommGraph(int holder, int destination)> estimate;
  const RoutingPolicy* policy = nullptr;
  CongestionMode congestion = CongestionMode::Off;
  std::mt19937_64* rng = nullptr;
  std::uint64_t prune_seed = 0;
  int t = 0;
};

/// Advances one packet by one hop: direct delivery when the destination is
/// adjacent, otherwise a policy call; waits and relays both consume a hop,
/// and reaching the TTL without delivery drops the packet.
HopRecord step_packet(Packet& p, const StepContext& ctx, LinkLoad& loads);

/// Fills spr/pspr from delivered, hops_used, shortest_at_send and ttl.
void finalise_metrics(EpisodeResult& r);

/// Earliest start time that leaves room for any warm-up, and latest that
/// leaves a full TTL of frames.
std::pair<int, int> episode_window(const World& w, const SimOptions& o);

EpisodeResult run_episode(const World& w, const EpisodeSpec& spec, const RoutingPolicy& policy,
                          const SimOptions& options, std::uint64_t seed);

/// Random (time, src, dst) triples with a finite shortest path of at least
/// options.min_shortest hops; depends only on the world and the seed.
std::vector<EpisodeSpec> sample_episodes(const World& w, int n, const SimOptions& options,
                                         std::uint64_t seed);

struct MetricsSummary {
  double avg_spr = 0.0;   // over delivered packets
  double avg_pspr = 0.0;  // over all packets
  double rr = 0.0;
  int episodes = 0;
  int delivered = 0;
  long waits = 0;
};

MetricsSummary summarise(std::span<const EpisodeResult> results);

struct Evaluation {
  std::vector<EpisodeResult> episodes;  // skipped ones excluded from the summary
  MetricsSummary summary;
};

/// Per-episode seeds derive from `seed`; runs on up to TRAJAWARE_THREADS
/// threads with results collected in episode order.
Evaluation evaluate(const World& w, const RoutingPolicy& policy, int n_episodes,
                    const SimOptions& options, std::uint64_t seed);

/// Deterministic per-item seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Worker count from TRAJAWARE_THREADS (default 1).
int thread_count();

void write_results_csv(const std::filesystem::path& csv, std::span<const EpisodeResult> results);
nlohmann::json summary_json(const MetricsSummary& s);

}  // namespace trajaware
