#include "trajaware/traj_predict.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "trajaware/errors.hpp"

namespace trajaware {

int missing_steps(int n_hop, int f) {
  if (n_hop < 1 || f < 1) throw ParameterError("missing_steps needs n_hop >= 1 and f >= 1");
  return (n_hop + f - 1) / f - 1;
}

TrajInput encode_point(const RoadNetwork& map, Vec2 position, Vec2 next, Vec2 second) {
  const Vec2 b = map.bounds();
  return {position.x / b.x, position.y / b.y, next.x / b.x,
          next.y / b.y,     second.x / b.x,   second.y / b.y};
}

TrajInput encode_input(const RoadNetwork& map, const VehicleState& v) {
  const auto [first, second] = next_two_segment_nodes(map, v);
  return encode_point(map, v.position, first.position, second.position);
}

namespace {

kernels::NearestSegment nearest(Vec2 p, const RoadNetwork& map) {
  if (map.empty()) throw ConfigError("cannot project onto an empty road network");
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NumericError("non-finite point");
  return kernels::nearest_segment(p.x, p.y, map.segment_soa());
}

Vec2 foot_of(const RoadNetwork& map, const kernels::NearestSegment& ns) {
  const Segment& s = map.segments()[ns.index];
  const Vec2 a = map.position(s.from);
  const Vec2 b = map.position(s.to);
  return a + ns.t * (b - a);
}

}  // namespace

Vec2 project_to_road(Vec2 p, const RoadNetwork& map) { return foot_of(map, nearest(p, map)); }

nn::Tensor project_to_road(const nn::Tensor& points, const RoadNetwork& map) {
  if (points.shape().size() != 2 || points.cols() != 2)
    throw ShapeError("project_to_road expects [b, 2], got " + nn::shape_string(points.shape()));
  const std::size_t b = points.rows();
  std::vector<double> out(b * 2);
  // Per row Jacobian: d d^T / |d|^2 on a segment interior, zero when clamped.
  std::vector<std::array<double, 4>> jac(b, {0.0, 0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < b; ++i) {
    const auto ns = nearest({points.at(i, 0), points.at(i, 1)}, map);
    const Vec2 f = foot_of(map, ns);
    out[2 * i] = f.x;
    out[2 * i + 1] = f.y;
    if (ns.t > 0.0 && ns.t < 1.0) {
      const Segment& s = map.segments()[ns.index];
      const Vec2 d = map.position(s.to) - map.position(s.from);
      const double l2 = dot(d, d);
      jac[i] = {d.x * d.x / l2, d.x * d.y / l2, d.y * d.x / l2, d.y * d.y / l2};
    }
  }
  return nn::make_result({b, 2}, std::move(out), {points}, [jac, b](nn::Node& o) {
    nn::Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < b; ++i) {
      const auto& j = jac[i];
      const double gx = o.grad[2 * i], gy = o.grad[2 * i + 1];
      p.grad[2 * i] += j[0] * gx + j[2] * gy;
      p.grad[2 * i + 1] += j[1] * gx + j[3] * gy;
    }
  });
}

TrackPoint track_point(const VehicleState& v) {
  if (v.planned_path.empty())
    throw ConsistencyError("vehicle " + std::to_string(v.vehicle_id) + " has no planned path");
  const int next = v.planned_path[0];
  return {v.position, next, v.planned_path.size() >= 2 ? v.planned_path[1] : next};
}

Predictor Predictor::init(const PredictorConfig& config, std::uint64_t seed) {
  if (config.hidden < 1 || config.window < 1 || !(config.displacement_scale > 0.0))
    throw ParameterError("predictor dimensions must be positive");
  std::mt19937_64 rng(seed);
  Predictor p;
  p.config = config;
  p.gru = nn::GruParams::init(6, config.hidden, rng);
  p.head = nn::DenseParams::init(config.hidden, 2, rng);
  return p;
}

Predictor Predictor::zeros(const PredictorConfig& config) {
  Predictor p;
  p.config = config;
  p.gru = nn::GruParams::zeros(6, config.hidden);
  p.head.weight = nn::Tensor::parameter({static_cast<std::size_t>(config.hidden), 2},
                                        std::vector<double>(config.hidden * 2, 0.0));
  p.head.bias = nn::zeros_param(2);
  return p;
}

nn::NamedParams Predictor::named() const {
  nn::NamedParams out;
  gru.collect("gru", out);
  head.collect("head", out);
  return out;
}

namespace {

nn::Tensor encode_row(const RoadNetwork& map, Vec2 pos, int n1, int n2) {
  const TrajInput in = encode_point(map, pos, map.position(n1), map.position(n2));
  return nn::Tensor::from({1, 6}, std::vector<double>(in.begin(), in.end()));
}

// Moves the path cursor past every node the step from `from` to `to`
// reached or overshot.
void advance_cursor(const RoadNetwork& map, std::span<const int> path, std::size_t& cursor,
                    Vec2 from, Vec2 to) {
  Vec2 ref = from;
  while (cursor + 1 < path.size()) {
    const Vec2 target = map.position(path[cursor]);
    const Vec2 dir = target - ref;
    if (dot(dir, dir) > 0.0 && dot(to - target, dir) < 0.0) break;
    ref = target;
    ++cursor;
  }
}

}  // namespace

Vec2 rollout(const Predictor& p, const RoadNetwork& map, std::span<const TrackPoint> history,
             std::span<const int> planned_path, int steps) {
  if (history.empty()) throw ParameterError("rollout needs a non-empty history");
  if (steps < 0) throw ParameterError("rollout steps must be >= 0");
  const TrackPoint& last = history.back();
  if (steps == 0) return last.position;

  nn::NoGradGuard no_grad;
  const std::size_t window = std::min<std::size_t>(history.size(), p.config.window);
  nn::Tensor h = nn::Tensor::zeros({1, p.gru.hidden});
  for (std::size_t i = history.size() - window; i < history.size(); ++i) {
    const TrackPoint& tp = history[i];
    h = nn::gru_step(encode_row(map, tp.position, tp.next_node, tp.second_node), h, p.gru);
  }

  std::vector<int> path(planned_path.begin(), planned_path.end());
  if (path.empty()) path = {last.next_node};
  std::size_t cursor = 0;
  Vec2 pos = last.position;
  for (int s = 0; s < steps; ++s) {
    const nn::Tensor disp = nn::dense(h, p.head);
    const Vec2 raw{pos.x + disp.at(0) * p.config.displacement_scale,
                   pos.y + disp.at(1) * p.config.displacement_scale};
    const Vec2 next = project_to_road(raw, map);
    advance_cursor(map, path, cursor, pos, next);
    pos = next;
    if (s + 1 < steps) {
      const int n1 = path[cursor];
      const int n2 = cursor + 1 < path.size() ? path[cursor + 1] : n1;
      h = nn::gru_step(encode_row(map, pos, n1, n2), h, p.gru);
    }
  }
  return pos;
}

namespace {

struct TrackSample {
  const RoadNetwork* map;
  std::vector<TrackPoint> history;
  std::vector<int> planned_path;  // at the last history point
  Vec2 target;
};

// Per-vehicle chronological states of one trace.
std::map<int, std::vector<const VehicleState*>> tracks_of(const Trace& trace) {
  std::map<int, std::vector<const VehicleState*>> tracks;
  for (const auto& frame : trace)
    for (const auto& v : frame.vehicles) tracks[v.vehicle_id].push_back(&v);
  return tracks;
}

// Every (window history, state `ahead` seconds later) pair of a trace.
std::vector<TrackSample> collect_samples(const MapTrace& data, int window, int ahead) {
  std::vector<TrackSample> out;
  for (const auto& [id, track] : tracks_of(*data.trace)) {
    for (std::size_t last = window - 1; last + ahead < track.size(); ++last) {
      TrackSample s;
      s.map = data.map;
      for (std::size_t i = last + 1 - window; i <= last; ++i)
        s.history.push_back(track_point(*track[i]));
      s.planned_path = track[last]->planned_path;
      s.target = track[last + ahead]->position;
      out.push_back(std::move(s));
    }
  }
  return out;
}

template <typename T>
void subsample(std::vector<T>& v, std::size_t cap, std::mt19937_64& rng) {
  if (cap == 0 || v.size() <= cap) return;
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(cap);
}

}  // namespace

PredictorTrainResult train_predictor(std::span<const MapTrace> data, const PredictorConfig& config,
                                     const PredictorTrainConfig& train) {
  if (data.size() < 2) throw ParameterError("train_predictor needs at least two training maps");
  if (train.epochs < 0 || train.batch_size < 1)
    throw ParameterError("predictor epochs must be >= 0 and batch_size >= 1");
  PredictorTrainResult result{Predictor::init(config, train.seed), {}};
  if (train.epochs == 0) return result;

  std::mt19937_64 rng(train.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<TrackSample> samples;
  for (const auto& d : data) {
    auto s = collect_samples(d, config.window, 1);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  subsample(samples, static_cast<std::size_t>(train.max_samples), rng);
  if (samples.empty()) throw ParameterError("no training samples: traces are too short");

  Predictor& p = result.predictor;
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = train.learning_rate;
  nn::Adam adam(nn::tensors_of(p.named()), adam_cfg);
  const double scale = config.displacement_scale;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      const std::size_t b = end - start;
      // Group rows by map so each projection runs against its own network.
      std::map<const RoadNetwork*, std::vector<std::size_t>> by_map;
      for (std::size_t i = start; i < end; ++i) by_map[samples[order[i]].map].push_back(order[i]);

      nn::Tensor loss;
      for (const auto& [map, rows] : by_map) {
        const std::size_t n = rows.size();
        nn::Tensor h = nn::Tensor::zeros({n, p.gru.hidden});
        for (int w = 0; w < config.window; ++w) {
          std::vector<double> x;
          x.reserve(n * 6);
          for (std::size_t r : rows) {
            const TrackPoint& tp = samples[r].history[w];
            const auto in =
                encode_point(*map, tp.position, map->position(tp.next_node),
                             map->position(tp.second_node));
            x.insert(x.end(), in.begin(), in.end());
          }
          h = nn::gru_step(nn::Tensor::from({n, 6}, std::move(x)), h, p.gru);
        }
        std::vector<double> last, target;
        for (std::size_t r : rows) {
          const Vec2 l = samples[r].history.back().position;
          last.insert(last.end(), {l.x, l.y});
          target.insert(target.end(), {samples[r].target.x, samples[r].target.y});
        }
        const nn::Tensor moved = nn::add(nn::Tensor::from({n, 2}, std::move(last)),
                                         nn::scale(nn::dense(h, p.head), scale));
        const nn::Tensor err = nn::scale(
            nn::sub(project_to_road(moved, *map), nn::Tensor::from({n, 2}, std::move(target))),
            1.0 / scale);
        // Sum of squared errors over this group, normalised by the batch size.
        const nn::Tensor part =
            nn::scale(nn::mean_squared(err), static_cast<double>(2 * n) / static_cast<double>(b));
        loss = loss.defined() ? nn::add(loss, part) : part;
      }
      nn::backward(loss);
      adam.step();
      total += loss.item();
      ++batches;
    }
    const double mean = total / static_cast<double>(batches);
    if (!std::isfinite(mean) || mean > 1e6)
      throw TrainingFailure("predictor training diverged at epoch " + std::to_string(epoch), "");
    result.epoch_loss.push_back(mean);
  }
  return result;
}

std::vector<ErrorBucket> prediction_error_table(const Predictor& p, const MapTrace& data,
                                                int max_steps, int samples_per_bucket,
                                                std::uint64_t seed) {
  if (max_steps < 1) throw ParameterError("max_steps must be >= 1");
  std::vector<ErrorBucket> out;
  for (int k = 1; k <= max_steps; ++k) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(k));
    auto samples = collect_samples(data, p.config.window, k);
    subsample(samples, static_cast<std::size_t>(samples_per_bucket), rng);
    ErrorBucket bucket{k, static_cast<long>(samples.size()), 0.0, 0.0};
    double sum = 0.0;
    for (const auto& s : samples) {
      const Vec2 pred = rollout(p, *data.map, s.history, s.planned_path, k);
      sum += distance(pred, s.target);
      bucket.max_off_road_m = std::max(bucket.max_off_road_m, data.map->distance_to_network(pred));
    }
    bucket.mean_error_m = samples.empty() ? 0.0 : sum / static_cast<double>(samples.size());
    out.push_back(bucket);
  }
  return out;
}

void write_error_report(const std::filesystem::path& csv, std::span<const ErrorBucket> buckets) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out << "missing_steps,count,mean_error_m\n";
  out.precision(17);
  for (const auto& b : buckets) out << b.missing_steps << ',' << b.count << ',' << b.mean_error_m << '\n';
  if (!out) throw IoError("failed writing " + csv.string());
}

}  // namespace trajaware
