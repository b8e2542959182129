#include "trajaware/obs_store.hpp"

#include <algorithm>

#include "trajaware/errors.hpp"

namespace trajaware {

const KnowledgeEntry* KnowledgeBase::find(int vehicle_id) const {
  auto it = entries.find(vehicle_id);
  return it == entries.end() ? nullptr : it->second.get();
}

std::optional<int> KnowledgeBase::staleness(int vehicle_id) const {
  const KnowledgeEntry* e = find(vehicle_id);
  if (!e) return std::nullopt;
  return clock - e->last_seen_t;
}

bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
  if (a.owner != b.owner || a.clock != b.clock || a.entries.size() != b.entries.size())
    return false;
  return std::equal(a.entries.begin(), a.entries.end(), b.entries.begin(),
                    [](const auto& x, const auto& y) {
                      return x.first == y.first && *x.second == *y.second;
                    });
}

void merge_knowledge(KnowledgeBase& into, const KnowledgeBase& from) {
  for (const auto& [id, entry] : from.entries) {
    auto [it, inserted] = into.entries.try_emplace(id, entry);
    if (!inserted && entry->last_seen_t > it->second->last_seen_t) it->second = entry;
  }
}

void KnowledgeNetwork::begin_second(const TraceFrame& frame) {
  const int t = frame.time_step;
  for (auto it = bases_.begin(); it != bases_.end();)
    it = frame.find(it->first) ? std::next(it) : bases_.erase(it);
  for (const auto& v : frame.vehicles) {
    KnowledgeBase& kb = bases_[v.vehicle_id];
    kb.owner = v.vehicle_id;
    kb.clock = t;
    auto own = std::make_shared<KnowledgeEntry>();
    own->vehicle_id = v.vehicle_id;
    own->last_position = v.position;
    own->last_seen_t = t;
    own->planned_path = v.planned_path;
    if (const KnowledgeEntry* prev = kb.find(v.vehicle_id)) own->history = prev->history;
    own->history.push_back(track_point(v));
    const auto keep = static_cast<std::size_t>(std::max(1, options_.history_length));
    if (own->history.size() > keep)
      own->history.erase(own->history.begin(), own->history.end() - keep);
    kb.entries[v.vehicle_id] = std::move(own);
    std::erase_if(kb.entries, [&](const auto& kv) {
      return t - kv.second->last_seen_t > options_.eviction_age;
    });
  }
}

void KnowledgeNetwork::broadcast_round(const TraceFrame& frame, double comm_range) {
  const double r2 = comm_range * comm_range;
  const auto& vs = frame.vehicles;
  // Read every neighbour's pre-round base, then apply all merges at once.
  std::vector<std::pair<int, KnowledgeBase>> updated;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto own = bases_.find(vs[i].vehicle_id);
    if (own == bases_.end()) continue;
    KnowledgeBase next = own->second;
    for (std::size_t j = 0; j < vs.size(); ++j) {
      if (i == j) continue;
      const Vec2 d = vs[i].position - vs[j].position;
      if (d.x * d.x + d.y * d.y > r2) continue;
      auto nb = bases_.find(vs[j].vehicle_id);
      if (nb != bases_.end()) merge_knowledge(next, nb->second);
    }
    updated.emplace_back(vs[i].vehicle_id, std::move(next));
  }
  for (auto& [id, kb] : updated) bases_[id] = std::move(kb);
}

void KnowledgeNetwork::advance_second(const TraceFrame& frame, double comm_range, int f) {
  if (f < 1) throw ParameterError("broadcast frequency must be >= 1");
  begin_second(frame);
  for (int r = 0; r < f; ++r) broadcast_round(frame, comm_range);
}

const KnowledgeBase& KnowledgeNetwork::base(int owner) const {
  auto it = bases_.find(owner);
  if (it == bases_.end())
    throw LookupError("no knowledge base for vehicle " + std::to_string(owner));
  return it->second;
}

int warmup_seconds(int rounds, int f) {
  if (rounds < 0 || f < 1) throw ParameterError("warm-up needs rounds >= 0 and f >= 1");
  return (rounds + f - 1) / f;
}

CommGraph estimated_graph(const KnowledgeBase& base, const Predictor* predictor,
                          const RoadNetwork& map, double comm_range, int destination,
                          const FeatureScale& scale, PredictionCache* cache) {
  if (base.entries.empty()) throw ParameterError("estimated_graph needs a non-empty base");
  std::vector<int> ids;
  std::vector<Vec2> pos;
  std::vector<bool> fresh;
  for (const auto& [id, e] : base.entries) {
    const int stale = base.clock - e->last_seen_t;
    Vec2 p = e->last_position;
    if (stale > 0 && predictor && !e->history.empty()) {
      const auto key = std::make_tuple(id, e->last_seen_t, stale);
      auto hit = cache ? cache->find(key) : PredictionCache::iterator{};
      if (cache && hit != cache->end()) {
        p = hit->second;
      } else {
        p = rollout(*predictor, map, e->history, e->planned_path, stale);
        if (cache) cache->emplace(key, p);
      }
    }
    ids.push_back(id);
    pos.push_back(p);
    fresh.push_back(stale == 0);
  }
  CommGraph g = build_comm_graph(ids, pos, comm_range, destination, base.owner, scale);
  const int h = g.holder_index;
  auto& own = g.neighbours[h];
  for (int x : own)
    if (!fresh[x]) {
      auto& back = g.neighbours[x];
      back.erase(std::remove(back.begin(), back.end(), h), back.end());
    }
  std::erase_if(own, [&](int x) { return !fresh[x]; });
  compute_features(g);
  return g;
}

bool reachability_check(const CommGraph& g, int holder, int destination) {
  const auto d = g.index_of(destination);
  if (!d) return false;
  return hop_vector(g, g.require_index(holder))[*d].has_value();
}

}  // namespace trajaware
