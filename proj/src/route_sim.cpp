#include "trajaware/route_sim.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <thread>

#include "trajaware/errors.hpp"

namespace trajaware {

std::string_view outcome_name(HopOutcome o) {
  switch (o) {
    case HopOutcome::Relayed: return "RELAYED";
    case HopOutcome::Delivered: return "DELIVERED";
    case HopOutcome::DroppedTtl: return "DROPPED_TTL";
    case HopOutcome::DroppedUnreachable: return "DROPPED_UNREACHABLE";
    case HopOutcome::CongestionWait: return "CONGESTION_WAIT";
    case HopOutcome::NoNeighbourWait: return "NO_NEIGHBOUR_WAIT";
    case HopOutcome::DroppedHolderLost: return "DROPPED_HOLDER_LOST";
    case HopOutcome::DroppedDestinationLost: return "DROPPED_DESTINATION_LOST";
  }
  return "?";
}

bool is_terminal(HopOutcome o) {
  return o != HopOutcome::Relayed && o != HopOutcome::CongestionWait &&
         o != HopOutcome::NoNeighbourWait;
}

std::string_view observation_name(Observation o) {
  return o == Observation::Complete ? "complete" : "partial";
}

std::string_view congestion_name(CongestionMode c) {
  return c == CongestionMode::On ? "congestion" : "no_congestion";
}

namespace {
std::pair<int, int> link_key(int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }
}  // namespace

double LinkLoad::residual(int a, int b) const {
  auto it = booked.find(link_key(a, b));
  return capacity - (it == booked.end() ? 0.0 : it->second);
}

void LinkLoad::book(int a, int b, double size) { booked[link_key(a, b)] += size; }

double LinkLoad::max_booked() const {
  double m = 0.0;
  for (const auto& [k, v] : booked) m = std::max(m, v);
  return m;
}

// --- policies ---------------------------------------------------------------

Decision QRoutingPolicy::decide(const CommGraph& g, int holder, int destination,
                                std::mt19937_64& rng, std::uint64_t prune_seed) const {
  PolicyState state = make_policy_state(g, holder, destination, params_.config, prune_seed);
  const QOutput q = q_forward(state, params_);
  Decision d;
  d.action_index = select_action_index(q, epsilon_, rng);
  d.next_hop = q.action_ids[d.action_index];
  if (record_) d.state = std::make_shared<const StateSnapshot>(snapshot_of(state, params_.config));
  return d;
}

Decision OraclePolicy::decide(const CommGraph& g, int holder, int destination, std::mt19937_64&,
                              std::uint64_t) const {
  const int h = g.require_index(holder);
  const auto& nb = g.neighbours[h];
  if (nb.empty()) throw NoActionError("holder has no neighbours");
  Decision d;
  if (const auto di = g.index_of(destination)) {
    const auto dist = hop_vector(g, *di);
    int best_hops = std::numeric_limits<int>::max();
    for (int x : nb)
      if (dist[x] && (*dist[x] < best_hops ||
                      (*dist[x] == best_hops && g.node_ids[x] < d.next_hop))) {
        best_hops = *dist[x];
        d.next_hop = g.node_ids[x];
      }
    if (d.next_hop >= 0) return d;
    double best = std::numeric_limits<double>::infinity();
    for (int x : nb) {
      const double dd = distance(g.positions[x], g.positions[*di]);
      if (dd < best) {
        best = dd;
        d.next_hop = g.node_ids[x];
      }
    }
    return d;
  }
  d.next_hop = g.node_ids[nb.front()];
  return d;
}

Decision RandomPolicy::decide(const CommGraph& g, int holder, int, std::mt19937_64& rng,
                              std::uint64_t prune_seed) const {
  const auto pruned = prune_actions(g, holder, k_max_, prune_seed);
  if (pruned.retained.empty()) throw NoActionError("holder has no neighbours");
  std::uniform_int_distribution<std::size_t> pick(0, pruned.retained.size() - 1);
  Decision d;
  d.action_index = static_cast<int>(pick(rng));
  d.next_hop = pruned.retained[d.action_index];
  return d;
}

// --- world --------------------------------------------------------------------

const TraceFrame& World::frame(int t) const {
  if (trace->empty()) throw LookupError("empty trace");
  const long i = static_cast<long>(t) - trace->front().time_step;
  if (i < 0 || i >= static_cast<long>(trace->size()))
    throw LookupError("time step " + std::to_string(t) + " outside the trace");
  return (*trace)[i];
}

int World::first_t() const { return trace->front().time_step; }
int World::last_t() const { return trace->back().time_step; }

void SimOptions::validate() const {
  if (!(comm_range > 0.0)) throw ValidationError("comm_range must be positive");
  if (ttl < 1) throw ValidationError("ttl must be >= 1");
  if (k_max < 1) throw ValidationError("k_max must be >= 1");
  if (broadcast_f < 1) throw ValidationError("broadcast_f must be >= 1");
  if (warmup_rounds < 0) throw ValidationError("warmup_rounds must be >= 0");
  if (background_packets < 0) throw ValidationError("background_packets must be >= 0");
  if (!(link_capacity > 0.0)) throw ValidationError("link_capacity must be positive");
  if (graph_refresh < 1) throw ValidationError("graph_refresh must be >= 1");
  if (min_shortest < 1) throw ValidationError("min_shortest must be >= 1");
  if (observation == Observation::Partial && !predictor)
    throw ValidationError("partial observation needs a predictor");
}

// --- one hop ------------------------------------------------------------------

HopRecord step_packet(Packet& p, const StepContext& ctx, LinkLoad& loads) {
  const CommGraph& g = *ctx.truth;
  HopRecord rec{ctx.t, HopOutcome::Relayed, p.holder, {}};
  const auto h = g.index_of(p.holder);
  if (!h) {
    rec.outcome = HopOutcome::DroppedHolderLost;
    return rec;
  }
  const auto d = g.index_of(p.destination);
  if (!d) {
    rec.outcome = HopOutcome::DroppedDestinationLost;
    return rec;
  }
  if (g.connected(*h, *d)) {
    ++p.hops_used;
    p.holder = p.destination;
    rec.outcome = HopOutcome::Delivered;
    return rec;
  }
  if (g.degree(*h) == 0) {
    ++p.hops_used;
    ++p.waits;
    rec.outcome = p.hops_used >= p.ttl ? HopOutcome::DroppedTtl : HopOutcome::NoNeighbourWait;
    return rec;
  }
  Decision dec;
  if (ctx.estimate) {
    const CommGraph view = ctx.estimate(p.holder, p.destination);
    if (!reachability_check(view, p.holder, p.destination)) {
      rec.outcome = HopOutcome::DroppedUnreachable;
      return rec;
    }
    dec = ctx.policy->decide(view, p.holder, p.destination, *ctx.rng, ctx.prune_seed);
  } else {
    dec = ctx.policy->decide(g, p.holder, p.destination, *ctx.rng, ctx.prune_seed);
  }
  const auto next = g.index_of(dec.next_hop);
  if (!next || !g.connected(*h, *next))
    throw ConsistencyError("policy chose " + std::to_string(dec.next_hop) +
                           ", which is not a neighbour of " + std::to_string(p.holder));
  rec.decision = dec;
  ++p.hops_used;
  if (ctx.congestion == CongestionMode::On && loads.residual(p.holder, dec.next_hop) < p.size) {
    ++p.waits;
    rec.outcome = HopOutcome::CongestionWait;
  } else {
    if (ctx.congestion == CongestionMode::On) loads.book(p.holder, dec.next_hop, p.size);
    p.holder = dec.next_hop;
    rec.outcome = HopOutcome::Relayed;
  }
  if (p.hops_used >= p.ttl) rec.outcome = HopOutcome::DroppedTtl;
  return rec;
}

void finalise_metrics(EpisodeResult& r) {
  if (r.shortest_at_send < 1) throw ConsistencyError("episode without a shortest path");
  if (r.delivered) {
    r.spr = static_cast<double>(r.hops_used) / r.shortest_at_send;
    r.pspr = *r.spr;
  } else {
    r.spr.reset();
    r.pspr = static_cast<double>(r.ttl) / r.shortest_at_send;
  }
}

// --- episodes -----------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::pair<int, int> episode_window(const World& w, const SimOptions& o) {
  return {w.first_t() + warmup_seconds(o.warmup_rounds, o.broadcast_f), w.last_t() - o.ttl};
}

namespace {

CommGraph frame_graph(const World& w, int t, const SimOptions& o) {
  const TraceFrame& f = w.frame(t);
  if (f.vehicles.empty()) return {};
  return build_comm_graph(f, o.comm_range, f.vehicles.front().vehicle_id,
                          f.vehicles.front().vehicle_id,
                          FeatureScale{w.map->diagonal(), o.k_max});
}

std::optional<int> shortest_hops(const CommGraph& g, int src, int dst) {
  const auto s = g.index_of(src);
  const auto d = g.index_of(dst);
  if (!s || !d) return std::nullopt;
  return hop_vector(g, *s)[*d];
}

class Episode {
 public:
  Episode(const World& w, const RoutingPolicy& policy, const SimOptions& o, std::uint64_t seed)
      : w_(w), policy_(policy), o_(o), seed_(seed), rng_(seed), kn_(o.knowledge) {}

  const CommGraph& env_graph(int start, int t) {
    const int te = start + ((t - start) / o_.graph_refresh) * o_.graph_refresh;
    auto it = graphs_.find(te);
    if (it == graphs_.end()) it = graphs_.emplace(te, frame_graph(w_, te, o_)).first;
    return it->second;
  }

  EpisodeResult run(const EpisodeSpec& spec) {
    EpisodeResult r;
    r.spec = spec;
    r.ttl = o_.ttl;
    const auto shortest = spec.source == spec.destination
                              ? std::nullopt
                              : shortest_hops(env_graph(spec.start_t, spec.start_t),
                                              spec.source, spec.destination);
    if (!shortest) {
      r.skipped = true;
      r.skip_reason = "no finite shortest path at send time";
      return r;
    }
    r.shortest_at_send = *shortest;
    const bool partial = o_.observation == Observation::Partial;
    if (partial)
      for (int s = spec.start_t - warmup_seconds(o_.warmup_rounds, o_.broadcast_f);
           s < spec.start_t; ++s)
        kn_.advance_second(w_.frame(s), o_.comm_range, o_.broadcast_f);

    std::vector<Packet> packets{make_packet(0, spec.source, spec.destination, spec.start_t,
                                            *shortest)};
    const bool congested = o_.congestion == CongestionMode::On;
    int next_id = 1;
    if (congested)
      for (int i = 0; i < o_.background_packets; ++i)
        if (auto bg = background_packet(next_id++, spec.start_t)) packets.push_back(*bg);

    LinkLoad loads;
    loads.capacity = o_.link_capacity;
    const FeatureScale scale{w_.map->diagonal(), o_.k_max};
    for (int t = spec.start_t;; ++t) {
      if (partial) kn_.advance_second(w_.frame(t), o_.comm_range, o_.broadcast_f);
      loads.clear();
      StepContext ctx;
      ctx.truth = &env_graph(spec.start_t, t);
      ctx.policy = &policy_;
      ctx.congestion = o_.congestion;
      ctx.rng = &rng_;
      ctx.t = t;
      if (partial)
        ctx.estimate = [&](int holder, int destination) {
          return estimated_graph(kn_.base(holder), o_.predictor, *w_.map, o_.comm_range,
                                 destination, scale, &cache_);
        };
      std::vector<std::size_t> order(packets.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      if (congested) std::shuffle(order.begin(), order.end(), rng_);
      bool done = false;
      for (std::size_t i : order) {
        Packet& p = packets[i];
        ctx.prune_seed = derive_seed(seed_, (static_cast<std::uint64_t>(t) << 20) ^ p.packet_id);
        HopRecord rec = step_packet(p, ctx, loads);
        if (i == 0) {
          r.hops.push_back(rec);
          if (is_terminal(rec.outcome)) {
            r.outcome = rec.outcome;
            r.delivered = rec.outcome == HopOutcome::Delivered;
            r.hops_used = p.hops_used;
            r.waits = p.waits;
            done = true;
          }
        } else if (is_terminal(rec.outcome)) {
          if (auto bg = background_packet(next_id++, t + 1)) p = *bg;
        }
      }
      if (done) break;
    }
    finalise_metrics(r);
    return r;
  }

 private:
  Packet make_packet(int id, int src, int dst, int t, int shortest) {
    Packet p;
    p.packet_id = id;
    p.source = src;
    p.destination = dst;
    p.holder = src;
    p.ttl = o_.ttl;
    p.size = 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    p.created_t = t;
    p.shortest_at_send = shortest;
    return p;
  }

  // A load-generating packet between two vehicles alive at t.
  std::optional<Packet> background_packet(int id, int t) {
    if (t > w_.last_t()) return std::nullopt;
    const TraceFrame& f = w_.frame(t);
    if (f.vehicles.size() < 2) return std::nullopt;
    const CommGraph g = frame_graph(w_, t, o_);
    std::uniform_int_distribution<std::size_t> pick(0, f.vehicles.size() - 1);
    for (int attempt = 0; attempt < 20; ++attempt) {
      const int a = f.vehicles[pick(rng_)].vehicle_id;
      const int b = f.vehicles[pick(rng_)].vehicle_id;
      if (a == b) continue;
      if (auto s = shortest_hops(g, a, b)) return make_packet(id, a, b, t, *s);
    }
    return std::nullopt;
  }

  const World& w_;
  const RoutingPolicy& policy_;
  const SimOptions& o_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  KnowledgeNetwork kn_;
  PredictionCache cache_;
  std::map<int, CommGraph> graphs_;
};

}  // namespace

EpisodeResult run_episode(const World& w, const EpisodeSpec& spec, const RoutingPolicy& policy,
                          const SimOptions& options, std::uint64_t seed) {
  options.validate();
  const auto [lo, hi] = episode_window(w, options);
  if (spec.start_t < lo || spec.start_t > hi)
    throw ParameterError("episode start " + std::to_string(spec.start_t) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
  const TraceFrame& f = w.frame(spec.start_t);
  if (!f.find(spec.source) || !f.find(spec.destination)) {
    EpisodeResult r;
    r.spec = spec;
    r.ttl = options.ttl;
    r.skipped = true;
    r.skip_reason = "source or destination not alive at send time";
    return r;
  }
  return Episode(w, policy, options, seed).run(spec);
}

std::vector<EpisodeSpec> sample_episodes(const World& w, int n, const SimOptions& options,
                                         std::uint64_t seed) {
  if (n < 1) throw ParameterError("need at least one episode");
  const auto [lo, hi] = episode_window(w, options);
  if (lo > hi) throw ParameterError("trace too short for the TTL and warm-up");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(lo, hi);
  std::vector<EpisodeSpec> out;
  std::map<int, CommGraph> graphs;
  long attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > 1000L * n) throw ParameterError("could not sample routable episodes");
    const int t = pick_t(rng);
    const TraceFrame& f = w.frame(t);
    if (f.vehicles.size() < 2) continue;
    auto it = graphs.find(t);
    if (it == graphs.end()) it = graphs.emplace(t, frame_graph(w, t, options)).first;
    std::uniform_int_distribution<std::size_t> pick(0, f.vehicles.size() - 1);
    const int a = f.vehicles[pick(rng)].vehicle_id;
    const int b = f.vehicles[pick(rng)].vehicle_id;
    if (a == b) continue;
    const auto s = shortest_hops(it->second, a, b);
    if (!s || *s < options.min_shortest) continue;
    out.push_back({t, a, b});
  }
  return out;
}

MetricsSummary summarise(std::span<const EpisodeResult> results) {
  MetricsSummary s;
  double spr = 0.0, pspr = 0.0;
  for (const auto& r : results) {
    if (r.skipped) continue;
    ++s.episodes;
    pspr += r.pspr;
    s.waits += r.waits;
    if (r.delivered) {
      ++s.delivered;
      spr += *r.spr;
    }
  }
  if (s.episodes == 0) throw ParameterError("no valid episodes to summarise");
  s.avg_spr = s.delivered ? spr / s.delivered : 0.0;
  s.avg_pspr = pspr / s.episodes;
  s.rr = static_cast<double>(s.delivered) / s.episodes;
  return s;
}

int thread_count() {
  if (const char* env = std::getenv("TRAJAWARE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

Evaluation evaluate(const World& w, const RoutingPolicy& policy, int n_episodes,
                    const SimOptions& options, std::uint64_t seed) {
  options.validate();
  const auto specs = sample_episodes(w, n_episodes, options, seed);
  Evaluation ev;
  ev.episodes.resize(specs.size());
  const std::size_t workers = std::min<std::size_t>(thread_count(), specs.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < specs.size(); i += workers) {
      ev.episodes[i] = run_episode(w, specs[i], policy, options, derive_seed(seed, i));
      ev.episodes[i].hops.clear();
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t k = 0; k < workers; ++k)
      pool.emplace_back([&, k] {
        try {
          work(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  ev.summary = summarise(ev.episodes);
  return ev;
}

void write_results_csv(const std::filesystem::path& csv, std::span<const EpisodeResult> results) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out.precision(17);
  out << "episode,src,dst,shortest,hops,outcome,spr,pspr\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.skipped) continue;
    out << i << ',' << r.spec.source << ',' << r.spec.destination << ',' << r.shortest_at_send
        << ',' << r.hops_used << ',' << outcome_name(r.outcome) << ',';
    if (r.spr) out << *r.spr;
    out << ',' << r.pspr << '\n';
  }
  if (!out) throw IoError("failed writing " + csv.string());
}

nlohmann::json summary_json(const MetricsSummary& s) {
  return {{"avg_spr", s.avg_spr}, {"avg_pspr", s.avg_pspr}, {"rr", s.rr},
          {"episodes", s.episodes}, {"delivered", s.delivered}, {"waits", s.waits}};
}

}  // namespace trajaware
