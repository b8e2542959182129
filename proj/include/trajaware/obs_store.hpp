#pragma once

// Proactive knowledge exchange. Every vehicle keeps timestamped observations
// of the vehicles it has heard about and merges its neighbours' knowledge f
// times per simulated second; the freshest observation of each vehicle wins.

#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <vector>

#include "trajaware/comm_graph.hpp"
#include "trajaware/traj_predict.hpp"

namespace trajaware {

inline constexpr int kDefaultEvictionAge = 20;
inline constexpr int kDefaultHistoryLength = 5;
inline constexpr int kDefaultWarmupRounds = 10;

struct KnowledgeEntry {
  int vehicle_id = 0;
  Vec2 last_position;
  int last_seen_t = 0;
  std::vector<int> planned_path;
  /// Chronological, one point per observed second, newest last.
  std::vector<TrackPoint> history;

  friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

/// Entries are immutable once published, so bases share them freely.
using EntryPtr = std::shared_ptr<const KnowledgeEntry>;

struct KnowledgeBase {
  int owner = 0;
  int clock = 0;
  std::map<int, EntryPtr> entries;

  const KnowledgeEntry* find(int vehicle_id) const;
  /// clock - last_seen_t, or nullopt when the vehicle is unknown.
  std::optional<int> staleness(int vehicle_id) const;

  /// Compares entry contents, not identity.
  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b);
};

/// Freshest-wins merge of `from` into `into` (ties keep `into`).
void merge_knowledge(KnowledgeBase& into, const KnowledgeBase& from);

struct KnowledgeOptions {
  int eviction_age = kDefaultEvictionAge;
  int history_length = kDefaultHistoryLength;
};

/// All knowledge bases of a simulation, keyed by owner.
class KnowledgeNetwork {
 public:
  explicit KnowledgeNetwork(KnowledgeOptions options = {}) : options_(options) {}

  /// Starts second `frame.time_step`: drops bases of departed vehicles,
  /// creates bases for new ones, refreshes each owner's own entry and
  /// evicts entries older than the eviction age.
  void begin_second(const TraceFrame& frame);

  /// One synchronous exchange: every vehicle merges the pre-round bases of
  /// its neighbours within comm_range.
  void broadcast_round(const TraceFrame& frame, double comm_range);

  /// begin_second followed by f rounds.
  void advance_second(const TraceFrame& frame, double comm_range, int f);

  const KnowledgeBase& base(int owner) const;
  const std::map<int, KnowledgeBase>& bases() const { return bases_; }
  const KnowledgeOptions& options() const { return options_; }

 private:
  KnowledgeOptions options_;
  std::map<int, KnowledgeBase> bases_;
};

/// Seconds of f rounds each needed to cover `rounds` broadcast rounds.
int warmup_seconds(int rounds, int f);

/// Cache of rollout results keyed by (vehicle, last_seen_t, steps).
using PredictionCache = std::map<std::tuple<int, int, int>, Vec2>;

/// The owner's view: every known vehicle at its observed position when
/// fresh, otherwise at its rollout by the staleness in seconds. The owner's
/// own links come from direct observation, so it is only linked to vehicles
/// seen this second.
CommGraph estimated_graph(const KnowledgeBase& base, const Predictor* predictor,
                          const RoadNetwork& map, double comm_range, int destination,
                          const FeatureScale& scale = {}, PredictionCache* cache = nullptr);

/// True iff the destination is in g and reachable from the holder.
bool reachability_check(const CommGraph& g, int holder, int destination);

}  // namespace trajaware
