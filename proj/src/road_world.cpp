#include "trajaware/road_world.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trajaware/errors.hpp"

namespace trajaware {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// RoadNetwork
// ---------------------------------------------------------------------------

RoadNetwork::RoadNetwork(std::vector<SegmentNode> nodes, std::vector<Segment> segments,
                         std::vector<int> junction_ids, Vec2 bounds)
    : nodes_(std::move(nodes)),
      segments_(std::move(segments)),
      junction_ids_(std::move(junction_ids)),
      bounds_(bounds) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!std::isfinite(n.position.x) || !std::isfinite(n.position.y))
      throw ValidationError("segment node " + std::to_string(n.id) + " has a non-finite position");
    if (!index_.emplace(n.id, i).second)
      throw ValidationError("duplicate segment node id " + std::to_string(n.id));
  }
  out_.resize(nodes_.size());
  in_.resize(nodes_.size());
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const auto& seg = segments_[s];
    auto a = index_.find(seg.from);
    auto b = index_.find(seg.to);
    if (a == index_.end() || b == index_.end())
      throw ValidationError("segment " + std::to_string(s) + " references a missing node");
    const double len = distance(nodes_[a->second].position, nodes_[b->second].position);
    if (!(len > 0.0))
      throw ValidationError("segment " + std::to_string(s) + " has zero length");
    if (len > kMaxSegmentLength + 1e-9)
      throw ValidationError("segment " + std::to_string(s) + " is longer than " +
                            std::to_string(kMaxSegmentLength) + " m");
    out_[a->second].push_back(s);
    in_[b->second].push_back(s);
    seg_ax_.push_back(nodes_[a->second].position.x);
    seg_ay_.push_back(nodes_[a->second].position.y);
    seg_bx_.push_back(nodes_[b->second].position.x);
    seg_by_.push_back(nodes_[b->second].position.y);
  }
  for (int j : junction_ids_)
    if (!index_.contains(j))
      throw ValidationError("junction id " + std::to_string(j) + " is not a segment node");

  // Undirected connectivity over nodes that carry at least one segment.
  if (!nodes_.empty()) {
    std::vector<std::size_t> parent(nodes_.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& seg : segments_) parent[find(index_.at(seg.from))] = find(index_.at(seg.to));
    std::set<std::size_t> roots;
    for (std::size_t i = 0; i < nodes_.size(); ++i) roots.insert(find(i));
    if (roots.size() > 1) throw ValidationError("road network is not connected");
  }
}

const SegmentNode& RoadNetwork::node(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown segment node " + std::to_string(id));
  return nodes_[it->second];
}

double RoadNetwork::segment_length(std::size_t s) const {
  return distance(position(segments_.at(s).from), position(segments_.at(s).to));
}

double RoadNetwork::mean_segment_length() const {
  if (segments_.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < segments_.size(); ++s) total += segment_length(s);
  return total / static_cast<double>(segments_.size());
}

const std::vector<std::size_t>& RoadNetwork::outgoing(int id) const {
  node(id);
  return out_[index_.at(id)];
}

const std::vector<std::size_t>& RoadNetwork::incoming(int id) const {
  node(id);
  return in_[index_.at(id)];
}

std::size_t RoadNetwork::find_segment(int from, int to) const {
  if (!has_node(from)) return npos;
  for (std::size_t s : out_[index_.at(from)])
    if (segments_[s].to == to) return s;
  return npos;
}

std::vector<int> RoadNetwork::shortest_route(int from, int to) const {
  const std::size_t src = index_.at(from);
  const std::size_t dst = index_.at(to);
  std::vector<double> dist(nodes_.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> prev(nodes_.size(), npos);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    for (std::size_t s : out_[u]) {
      const std::size_t v = index_.at(segments_[s].to);
      const double nd = d + segment_length(s);
      if (nd < dist[v]) {
        dist[v] = nd;
        prev[v] = u;
        pq.push({nd, v});
      }
    }
  }
  if (!std::isfinite(dist[dst])) return {};
  std::vector<int> route;
  for (std::size_t v = dst; v != npos; v = prev[v]) route.push_back(nodes_[v].id);
  std::reverse(route.begin(), route.end());
  return route;
}

double RoadNetwork::distance_to_network(Vec2 p) const {
  if (segments_.empty()) return std::numeric_limits<double>::infinity();
  return std::sqrt(kernels::nearest_segment(p.x, p.y, segment_soa()).dist_sq);
}

const VehicleState* TraceFrame::find(int vehicle_id) const {
  auto it = std::lower_bound(vehicles.begin(), vehicles.end(), vehicle_id,
                             [](const VehicleState& v, int id) { return v.vehicle_id < id; });
  if (it != vehicles.end() && it->vehicle_id == vehicle_id) return &*it;
  // Frames built by hand may not be sorted.
  for (const auto& v : vehicles)
    if (v.vehicle_id == vehicle_id) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Map generation
// ---------------------------------------------------------------------------

RoadNetwork generate_map(std::uint64_t seed, int grid_cols, int grid_rows, double cell_size,
                         double perturbation) {
  if (grid_cols < 2 || grid_rows < 2)
    throw ParameterError("grid_cols and grid_rows must be at least 2");
  if (!(cell_size > 0.0)) throw ParameterError("cell_size must be positive");
  if (!(perturbation >= 0.0 && perturbation <= 1.0))
    throw ParameterError("perturbation must lie in [0, 1]");

  std::mt19937_64 rng(seed);
  const double jitter = perturbation * cell_size / 4.0;
  std::uniform_real_distribution<double> offset(-jitter, jitter);

  std::vector<SegmentNode> nodes;
  std::vector<int> junctions;
  auto grid_id = [&](int c, int r) { return r * grid_cols + c; };
  for (int r = 0; r < grid_rows; ++r)
    for (int c = 0; c < grid_cols; ++c) {
      double dx = jitter > 0.0 ? offset(rng) : 0.0;
      double dy = jitter > 0.0 ? offset(rng) : 0.0;
      nodes.push_back({grid_id(c, r), {jitter + c * cell_size + dx, jitter + r * cell_size + dy}});
      junctions.push_back(grid_id(c, r));
    }

  std::vector<Segment> segments;
  int next_id = grid_cols * grid_rows;
  auto add_road = [&](int a, int b) {
    const Vec2 pa = nodes[a].position;
    const Vec2 pb = nodes[b].position;
    const int pieces = std::max(1, static_cast<int>(std::ceil(distance(pa, pb) / kMaxSegmentLength)));
    int prev = a;
    for (int k = 1; k <= pieces; ++k) {
      int cur = b;
      if (k < pieces) {
        const double t = static_cast<double>(k) / pieces;
        cur = next_id++;
        nodes.push_back({cur, pa + t * (pb - pa)});
      }
      segments.push_back({prev, cur});
      segments.push_back({cur, prev});
      prev = cur;
    }
  };
  for (int r = 0; r < grid_rows; ++r)
    for (int c = 0; c < grid_cols; ++c) {
      if (c + 1 < grid_cols) add_road(grid_id(c, r), grid_id(c + 1, r));
      if (r + 1 < grid_rows) add_road(grid_id(c, r), grid_id(c, r + 1));
    }

  const Vec2 bounds{(grid_cols - 1) * cell_size + 2.0 * jitter,
                    (grid_rows - 1) * cell_size + 2.0 * jitter};
  return RoadNetwork(std::move(nodes), std::move(segments), std::move(junctions), bounds);
}

// ---------------------------------------------------------------------------
// Traffic generation
// ---------------------------------------------------------------------------

namespace {

struct MovingVehicle {
  VehicleState state;
};

std::vector<double> junction_weights(const RoadNetwork& map, const TrafficOptions& opt) {
  const Vec2 centre = 0.5 * map.bounds();
  const double sigma = opt.centre_sigma * std::min(map.bounds().x, map.bounds().y);
  std::vector<double> w;
  for (int j : map.junction_ids()) {
    const double d = distance(map.position(j), centre);
    w.push_back(sigma > 0.0 ? std::exp(-d * d / (2.0 * sigma * sigma)) : 1.0);
  }
  return w;
}

double route_length(const RoadNetwork& map, const std::vector<int>& route) {
  double len = 0.0;
  for (std::size_t i = 1; i < route.size(); ++i)
    len += distance(map.position(route[i - 1]), map.position(route[i]));
  return len;
}

// Advances a vehicle by one second along its planned path. Returns false
// when it reaches its destination.
bool advance(const RoadNetwork& map, VehicleState& v) {
  double budget = v.speed;
  while (budget > 0.0) {
    const Vec2 target = map.position(v.planned_path.front());
    const double remaining = distance(v.position, target);
    if (budget >= remaining) {
      budget -= remaining;
      v.position = target;
      v.planned_path.erase(v.planned_path.begin());
      if (v.planned_path.empty()) return false;
    } else {
      v.position = v.position + (budget / remaining) * (target - v.position);
      budget = 0.0;
    }
  }
  return true;
}

}  // namespace

double calibrate_density(const RoadNetwork& map, double target_active,
                         const TrafficOptions& options) {
  if (map.junction_ids().size() < 2) throw ParameterError("map needs at least two junctions");
  std::mt19937_64 rng(0x5eed);
  const auto w = junction_weights(map, options);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  const double mean_speed = 0.5 * (options.speed_min + options.speed_max);
  double total = 0.0;
  int samples = 0;
  while (samples < 200) {
    const int a = map.junction_ids()[pick(rng)];
    const int b = map.junction_ids()[pick(rng)];
    if (a == b) continue;
    total += route_length(map, map.shortest_route(a, b)) / mean_speed;
    ++samples;
  }
  return target_active / (total / samples);
}

Trace generate_traffic(const RoadNetwork& map, std::uint64_t seed, int duration, double density,
                       const TrafficOptions& options) {
  if (duration < 1) throw ParameterError("duration must be at least 1 second");
  if (density < 0.0 || !std::isfinite(density)) throw ParameterError("density must be >= 0");
  Trace frames;
  frames.reserve(duration);
  if (density == 0.0 || map.junction_ids().size() < 2) {
    for (int t = 0; t < duration; ++t) frames.push_back({t, {}});
    return frames;
  }

  std::mt19937_64 rng(seed);
  const auto w = junction_weights(map, options);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::uniform_real_distribution<double> speed(options.speed_min, options.speed_max);
  std::poisson_distribution<int> arrivals(density);

  // Warm up for two mean trip times so t = 0 starts in steady state.
  const double mean_trip = map.diagonal() / (0.5 * (options.speed_min + options.speed_max));
  const int warmup = static_cast<int>(std::ceil(2.0 * mean_trip));

  std::vector<VehicleState> active;
  int next_vehicle = 0;
  auto spawn = [&]() {
    int a = 0, b = 0;
    do {
      a = map.junction_ids()[pick(rng)];
      b = map.junction_ids()[pick(rng)];
    } while (a == b);
    auto route = map.shortest_route(a, b);
    VehicleState v;
    v.vehicle_id = next_vehicle++;
    v.position = map.position(a);
    v.speed = speed(rng);
    v.planned_path.assign(route.begin() + 1, route.end());
    active.push_back(std::move(v));
  };

  for (int t = -warmup; t < duration; ++t) {
    int count = arrivals(rng);
    const int n = static_cast<int>(active.size());
    if (n + count < options.band_lo) count = options.band_lo - n;
    if (n + count > options.band_hi) count = std::max(0, options.band_hi - n);
    for (int k = 0; k < count; ++k) spawn();

    if (t >= 0) {
      TraceFrame frame{t, active};
      std::sort(frame.vehicles.begin(), frame.vehicles.end(),
                [](const auto& a, const auto& b) { return a.vehicle_id < b.vehicle_id; });
      frames.push_back(std::move(frame));
    }

    std::vector<VehicleState> still;
    still.reserve(active.size());
    for (auto& v : active)
      if (advance(map, v)) still.push_back(std::move(v));
    active = std::move(still);
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Planned-path geometry
// ---------------------------------------------------------------------------

int current_segment_start(const RoadNetwork& map, const VehicleState& v) {
  if (v.planned_path.empty())
    throw ConsistencyError("vehicle " + std::to_string(v.vehicle_id) + " has no planned path");
  const int head = v.planned_path.front();
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s : map.incoming(head)) {
    const int from = map.segments()[s].from;
    const double d = distance_to_segment(v.position, map.position(from), map.position(head));
    if (d < best_d) {
      best_d = d;
      best = from;
    }
  }
  if (best < 0 || best_d > kPositionSnapTolerance)
    throw ConsistencyError("vehicle " + std::to_string(v.vehicle_id) +
                           " is not on a segment leading to node " + std::to_string(head));
  return best;
}

std::pair<SegmentNode, SegmentNode> next_two_segment_nodes(const RoadNetwork& map,
                                                           const VehicleState& v) {
  current_segment_start(map, v);
  const SegmentNode& first = map.node(v.planned_path[0]);
  const SegmentNode& second = v.planned_path.size() >= 2 ? map.node(v.planned_path[1]) : first;
  return {first, second};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void save_map(const RoadNetwork& map, const std::filesystem::path& path) {
  json j;
  j["nodes"] = json::array();
  for (const auto& n : map.nodes())
    j["nodes"].push_back({{"id", n.id}, {"x", n.position.x}, {"y", n.position.y}});
  j["segments"] = json::array();
  for (const auto& s : map.segments()) j["segments"].push_back({s.from, s.to});
  j["junctions"] = map.junction_ids();
  j["bounds"] = {map.bounds().x, map.bounds().y};
  write_text(path, j.dump() + "\n");
}

RoadNetwork load_map(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    std::vector<SegmentNode> nodes;
    double max_x = 0.0, max_y = 0.0;
    for (const auto& n : j.at("nodes")) {
      nodes.push_back({n.at("id").get<int>(), {n.at("x").get<double>(), n.at("y").get<double>()}});
      max_x = std::max(max_x, nodes.back().position.x);
      max_y = std::max(max_y, nodes.back().position.y);
    }
    std::vector<Segment> segments;
    for (const auto& s : j.at("segments")) segments.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
    auto junctions = j.at("junctions").get<std::vector<int>>();
    Vec2 bounds{max_x, max_y};
    if (j.contains("bounds")) bounds = {j["bounds"].at(0).get<double>(), j["bounds"].at(1).get<double>()};
    return RoadNetwork(std::move(nodes), std::move(segments), std::move(junctions), bounds);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::filesystem::path route_path_for(const std::filesystem::path& trace_csv) {
  auto p = trace_csv;
  p.replace_extension(".routes.json");
  return p;
}

std::vector<Route> routes_from_trace(const RoadNetwork& map, const Trace& trace) {
  std::map<int, Route> routes;
  for (const auto& frame : trace)
    for (const auto& v : frame.vehicles) {
      if (routes.contains(v.vehicle_id)) continue;
      Route r{v.vehicle_id, frame.time_step, {current_segment_start(map, v)}};
      r.node_ids.insert(r.node_ids.end(), v.planned_path.begin(), v.planned_path.end());
      routes.emplace(v.vehicle_id, std::move(r));
    }
  std::vector<Route> out;
  for (auto& [id, r] : routes) out.push_back(std::move(r));
  return out;
}

void save_trace(const RoadNetwork& map, const Trace& trace, const std::filesystem::path& csv,
                const std::filesystem::path& routes) {
  std::string text = "t,vehicle_id,x,y,speed\n";
  for (const auto& frame : trace)
    for (const auto& v : frame.vehicles) {
      text += std::to_string(frame.time_step) + ',' + std::to_string(v.vehicle_id) + ',' +
              format_double(v.position.x) + ',' + format_double(v.position.y) + ',' +
              format_double(v.speed) + '\n';
    }
  write_text(csv, text);

  json j = json::array();
  for (const auto& r : routes_from_trace(map, trace))
    j.push_back({{"vehicle_id", r.vehicle_id}, {"depart_t", r.depart_t}, {"node_ids", r.node_ids}});
  write_text(routes, j.dump() + "\n");
}

void save_trace(const RoadNetwork& map, const Trace& trace, const std::filesystem::path& csv) {
  save_trace(map, trace, csv, route_path_for(csv));
}

namespace {

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError(std::string("invalid ") + name + " '" + std::string(field) + "'", line);
  return value;
}

}  // namespace

Trace load_trace(const std::filesystem::path& csv, const std::filesystem::path& routes_file,
                 const RoadNetwork& map) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());

  struct Row {
    int t, id;
    Vec2 pos;
    double speed;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return {};
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,vehicle_id,x,y,speed") throw ParseError("expected header t,vehicle_id,x,y,speed", 1);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 5) throw ParseError("expected 5 fields, got " + std::to_string(f.size()), line_no);
    Row r{parse_field<int>(f[0], line_no, "t"), parse_field<int>(f[1], line_no, "vehicle_id"),
          {parse_field<double>(f[2], line_no, "x"), parse_field<double>(f[3], line_no, "y")},
          parse_field<double>(f[4], line_no, "speed"), line_no};
    if (!std::isfinite(r.pos.x) || !std::isfinite(r.pos.y) || !std::isfinite(r.speed) || r.speed < 0)
      throw ParseError("non-finite or negative value", line_no);
    rows.push_back(r);
  }
  if (rows.empty()) return {};

  std::map<int, Route> routes;
  const json j = read_json(routes_file);
  try {
    for (const auto& r : j)
      routes[r.at("vehicle_id").get<int>()] = {r.at("vehicle_id").get<int>(), r.at("depart_t").get<int>(),
                                               r.at("node_ids").get<std::vector<int>>()};
  } catch (const json::exception& e) {
    throw ParseError(routes_file.string() + ": " + e.what());
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.t != b.t ? a.t < b.t : a.id < b.id; });

  std::map<int, std::size_t> cursor;
  Trace frames;
  for (const auto& r : rows) {
    if (frames.empty() || frames.back().time_step != r.t) frames.push_back({r.t, {}});
    auto& frame = frames.back();
    if (!frame.vehicles.empty() && frame.vehicles.back().vehicle_id == r.id)
      throw ValidationError("line " + std::to_string(r.line) + ": duplicate vehicle " +
                            std::to_string(r.id) + " at t=" + std::to_string(r.t));
    if (map.distance_to_network(r.pos) > kPositionSnapTolerance)
      throw ValidationError("line " + std::to_string(r.line) + ": position is off the road network");
    auto rit = routes.find(r.id);
    if (rit == routes.end() || rit->second.node_ids.size() < 2)
      throw ValidationError("line " + std::to_string(r.line) + ": no route for vehicle " +
                            std::to_string(r.id));
    const auto& route = rit->second.node_ids;
    std::size_t& c = cursor[r.id];
    std::size_t seg = c;
    for (; seg + 1 < route.size(); ++seg)
      if (distance_to_segment(r.pos, map.position(route[seg]), map.position(route[seg + 1])) <=
          kPositionSnapTolerance)
        break;
    if (seg + 1 >= route.size())
      throw ValidationError("line " + std::to_string(r.line) + ": vehicle " + std::to_string(r.id) +
                            " is off its route");
    // Within the snap tolerance of a node, prefer the later segment when it is
    // at least as close; a vehicle sitting exactly on a node has passed it.
    auto seg_dist = [&](std::size_t s) {
      return distance_to_segment(r.pos, map.position(route[s]), map.position(route[s + 1]));
    };
    while (seg + 2 < route.size() && seg_dist(seg + 1) <= seg_dist(seg)) ++seg;
    c = seg;
    VehicleState v{r.id, r.pos, r.speed, {route.begin() + static_cast<long>(seg) + 1, route.end()}};
    frame.vehicles.push_back(std::move(v));
  }
  return frames;
}

Trace load_trace(const std::filesystem::path& csv, const RoadNetwork& map) {
  return load_trace(csv, route_path_for(csv), map);
}

}  // namespace trajaware
