#include "trajaware/config.hpp"

#include <fstream>
#include <set>

#include "trajaware/errors.hpp"

namespace trajaware {

using nlohmann::json;

namespace {

// Walks every field once; the writer and the reader share the field list.
class Writer {
 public:
  explicit Writer(json& root) : cur_(&root) {}
  template <typename T>
  void operator()(const char* key, const T& v) {
    (*cur_)[key] = v;
  }
  void operator()(const char* key, const std::filesystem::path& v) { (*cur_)[key] = v.string(); }
  template <typename F>
  void section(const char* key, F&& body) {
    json* parent = cur_;
    (*parent)[key] = json::object();
    cur_ = &(*parent)[key];
    body();
    cur_ = parent;
  }

 private:
  json* cur_;
};

class Reader {
 public:
  explicit Reader(const json& root) : cur_(&root) {
    if (!root.is_object()) throw ValidationError("config: expected a JSON object");
  }

  template <typename T>
  void operator()(const char* key, T& v) {
    seen_.back().insert(key);
    auto it = cur_->find(key);
    if (it == cur_->end()) return;
    try {
      if constexpr (std::is_same_v<T, std::filesystem::path>) {
        v = it->template get<std::string>();
      } else {
        if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>)
          if (!it->is_number_integer() && !it->is_number_unsigned())
            throw ValidationError(path(key) + ": expected an integer");
        if constexpr (std::is_floating_point_v<T>)
          if (!it->is_number()) throw ValidationError(path(key) + ": expected a number");
        if constexpr (std::is_same_v<T, bool>)
          if (!it->is_boolean()) throw ValidationError(path(key) + ": expected true or false");
        v = it->template get<T>();
      }
    } catch (const json::exception& e) {
      throw ValidationError(path(key) + ": " + e.what());
    }
  }

  template <typename F>
  void section(const char* key, F&& body) {
    seen_.back().insert(key);
    auto it = cur_->find(key);
    if (it == cur_->end()) return;
    if (!it->is_object()) throw ValidationError(path(key) + ": expected an object");
    const json* parent = cur_;
    cur_ = &*it;
    prefix_.push_back(key);
    seen_.emplace_back();
    body();
    check_unknown();
    seen_.pop_back();
    prefix_.pop_back();
    cur_ = parent;
  }

  void check_unknown() const {
    for (const auto& [k, v] : cur_->items())
      if (!seen_.back().contains(k)) throw ValidationError(path(k.c_str()) + ": unknown field");
  }

 private:
  std::string path(const char* key) const {
    std::string p;
    for (const auto& s : prefix_) p += s + ".";
    return p + key;
  }

  const json* cur_;
  std::vector<std::string> prefix_;
  std::vector<std::set<std::string>> seen_{1};
};

template <typename V, typename C>
void visit_qnet(V& v, C& n) {
  v("k_max", n.k_max);
  v("unpruned_slots", n.unpruned_slots);
  v("use_pruning", n.use_pruning);
  v("use_attention", n.use_attention);
  v("sage_layers", n.sage_layers);
  v("hidden", n.hidden);
  v("d_h", n.d_h);
  v("heads", n.heads);
  v("concat_layers", n.concat_layers);
}

template <typename V, typename C>
void visit_predictor(V& v, C& p) {
  v("hidden", p.hidden);
  v("window", p.window);
  v("displacement_scale", p.displacement_scale);
}

template <typename V, typename C>
void visit_run(V& v, C& c) {
  v("seed", c.seed);
  v("output_dir", c.output_dir);
  v.section("world", [&] {
    auto& w = c.world;
    v("maps", w.maps);
    v("held_out", w.held_out);
    v("grid_cols", w.grid_cols);
    v("grid_rows", w.grid_rows);
    v("cell_size", w.cell_size);
    v("perturbation", w.perturbation);
    v("duration", w.duration);
    v("target_active", w.target_active);
    v("band_lo", w.traffic.band_lo);
    v("band_hi", w.traffic.band_hi);
    v("speed_min", w.traffic.speed_min);
    v("speed_max", w.traffic.speed_max);
    v("centre_sigma", w.traffic.centre_sigma);
  });
  v.section("sim", [&] {
    auto& s = c.sim;
    v("comm_range", s.comm_range);
    v("ttl", s.ttl);
    v("k_max", s.k_max);
    v("broadcast_f", s.broadcast_f);
    v("warmup_rounds", s.warmup_rounds);
    v("eviction_age", s.knowledge.eviction_age);
    v("history_length", s.knowledge.history_length);
    v("background_packets", s.background_packets);
    v("link_capacity", s.link_capacity);
    v("graph_refresh", s.graph_refresh);
    v("min_shortest", s.min_shortest);
  });
  v.section("net", [&] {
    auto& n = c.net;
    v("unpruned_slots", n.unpruned_slots);
    v("use_pruning", n.use_pruning);
    v("use_attention", n.use_attention);
    v("sage_layers", n.sage_layers);
    v("hidden", n.hidden);
    v("d_h", n.d_h);
    v("heads", n.heads);
    v("concat_layers", n.concat_layers);
  });
  v.section("train", [&] {
    auto& t = c.train;
    v("gamma", t.gamma);
    v("learning_rate", t.learning_rate);
    v("grad_clip", t.grad_clip);
    v("epsilon_start", t.epsilon_start);
    v("epsilon_end", t.epsilon_end);
    v("epsilon_decay_steps", t.epsilon_decay_steps);
    v("target_sync_every", t.target_sync_every);
    v("batch_size", t.batch_size);
    v("buffer_capacity", t.buffer_capacity);
    v("train_every", t.train_every);
    v("episodes", t.episodes);
    v("graph_refresh", t.sim.graph_refresh);
    v("min_shortest", t.sim.min_shortest);
    v("log_every", t.log_every);
    v("checkpoint_every", t.checkpoint_every);
    v("divergence_loss", t.divergence_loss);
    v.section("rewards", [&] {
      v("relayed", t.rewards.relayed);
      v("delivered", t.rewards.delivered);
      v("dropped", t.rewards.dropped);
      v("wait", t.rewards.wait);
    });
  });
  v.section("predictor", [&] {
    visit_predictor(v, c.predictor);
    v("epochs", c.predictor_train.epochs);
    v("batch_size", c.predictor_train.batch_size);
    v("learning_rate", c.predictor_train.learning_rate);
    v("max_samples", c.predictor_train.max_samples);
  });
  v.section("eval", [&] {
    auto& e = c.eval;
    v("episodes", e.episodes);
    v("seed", e.seed);
    v("policy", e.policy);
    v("observations", e.observations);
    v("congestion", e.congestion);
    v("variants", e.variants);
  });
}

// Shared environment knobs flow from `sim` into the other sections.
void sync_derived(RunConfig& c) {
  c.net.k_max = c.sim.k_max;
  const int refresh = c.train.sim.graph_refresh;
  const int min_shortest = c.train.sim.min_shortest;
  c.train.sim = c.sim;
  c.train.sim.graph_refresh = refresh;
  c.train.sim.min_shortest = min_shortest;
  c.train.sim.observation = Observation::Complete;
  c.train.sim.congestion = CongestionMode::Off;
  c.predictor_train.seed = c.seed;
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError(field + ": " + what);
}

bool one_of(const std::string& s, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (s == o) return true;
  return false;
}

}  // namespace

void RunConfig::validate() const {
  const auto& w = world;
  require(w.maps >= 3, "world.maps", "need at least 3 maps (two for training, one held out)");
  require(w.held_out >= 0 && w.held_out < w.maps, "world.held_out", "must index one of the maps");
  require(w.grid_cols >= 2, "world.grid_cols", "must be >= 2");
  require(w.grid_rows >= 2, "world.grid_rows", "must be >= 2");
  require(w.cell_size > 0.0, "world.cell_size", "must be positive");
  require(w.perturbation >= 0.0 && w.perturbation < 1.0, "world.perturbation", "must be in [0, 1)");
  require(w.duration >= 1, "world.duration", "must be >= 1");
  require(w.target_active > 0.0, "world.target_active", "must be positive");
  require(w.traffic.band_lo >= 0 && w.traffic.band_hi >= w.traffic.band_lo, "world.band_hi",
          "must be >= band_lo >= 0");
  require(w.traffic.speed_min > 0.0 && w.traffic.speed_max >= w.traffic.speed_min,
          "world.speed_max", "must be >= speed_min > 0");
  require(w.traffic.centre_sigma > 0.0, "world.centre_sigma", "must be positive");

  require(sim.comm_range > 0.0, "sim.comm_range", "must be positive");
  require(sim.ttl >= 1, "sim.ttl", "must be >= 1");
  require(sim.k_max >= 1, "sim.k_max", "must be >= 1");
  require(sim.broadcast_f >= 1, "sim.broadcast_f", "must be >= 1");
  require(sim.warmup_rounds >= 0, "sim.warmup_rounds", "must be >= 0");
  require(sim.knowledge.eviction_age >= 1, "sim.eviction_age", "must be >= 1");
  require(sim.knowledge.history_length >= 1, "sim.history_length", "must be >= 1");
  require(sim.background_packets >= 0, "sim.background_packets", "must be >= 0");
  require(sim.link_capacity > 0.0, "sim.link_capacity", "must be positive");
  require(sim.graph_refresh >= 1, "sim.graph_refresh", "must be >= 1");
  require(sim.min_shortest >= 1, "sim.min_shortest", "must be >= 1");

  require(net.unpruned_slots >= 1, "net.unpruned_slots", "must be >= 1");
  require(net.sage_layers >= 1, "net.sage_layers", "must be >= 1");
  require(net.hidden >= 1, "net.hidden", "must be >= 1");
  require(net.d_h >= 1, "net.d_h", "must be >= 1");
  require(net.heads >= 1 && net.d_h % net.heads == 0, "net.heads", "must divide net.d_h");

  const auto& t = train;
  require(t.gamma > 0.0 && t.gamma < 1.0, "train.gamma", "must be in (0, 1)");
  require(t.learning_rate > 0.0, "train.learning_rate", "must be positive");
  require(t.epsilon_start >= 0.0 && t.epsilon_start <= 1.0, "train.epsilon_start",
          "must be in [0, 1]");
  require(t.epsilon_end >= 0.0 && t.epsilon_end <= 1.0, "train.epsilon_end", "must be in [0, 1]");
  require(t.epsilon_decay_steps >= 1, "train.epsilon_decay_steps", "must be >= 1");
  require(t.target_sync_every >= 1, "train.target_sync_every", "must be >= 1");
  require(t.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(t.buffer_capacity >= t.batch_size, "train.buffer_capacity", "must be >= batch_size");
  require(t.train_every >= 1, "train.train_every", "must be >= 1");
  require(t.episodes >= 0, "train.episodes", "must be >= 0");
  require(t.sim.graph_refresh >= 1, "train.graph_refresh", "must be >= 1");
  require(t.sim.min_shortest >= 1, "train.min_shortest", "must be >= 1");
  require(t.log_every >= 1, "train.log_every", "must be >= 1");
  require(t.checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0");
  require(t.divergence_loss > 0.0, "train.divergence_loss", "must be positive");

  require(predictor.hidden >= 1, "predictor.hidden", "must be >= 1");
  require(predictor.window >= 1, "predictor.window", "must be >= 1");
  require(predictor.displacement_scale > 0.0, "predictor.displacement_scale", "must be positive");
  require(predictor_train.epochs >= 0, "predictor.epochs", "must be >= 0");
  require(predictor_train.batch_size >= 1, "predictor.batch_size", "must be >= 1");
  require(predictor_train.learning_rate > 0.0, "predictor.learning_rate", "must be positive");
  require(predictor_train.max_samples >= 0, "predictor.max_samples", "must be >= 0");

  require(eval.episodes >= 1, "eval.episodes", "must be >= 1");
  require(one_of(eval.policy, {"q", "oracle", "random"}), "eval.policy",
          "must be q, oracle or random");
  for (const auto& o : eval.observations)
    require(one_of(o, {"complete", "partial"}), "eval.observations", "unknown mode " + o);
  for (const auto& o : eval.congestion)
    require(one_of(o, {"off", "on"}), "eval.congestion", "unknown mode " + o);
  for (const auto& v : eval.variants)
    require(one_of(v, {"full", "attention_only", "no_attention", "neither"}), "eval.variants",
            "unknown variant " + v);
}

json to_json(const RunConfig& c) {
  json j = json::object();
  Writer w(j);
  visit_run(w, c);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j);
  visit_run(r, c);
  r.check_unknown();
  sync_derived(c);
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ValidationError("override key '" + key + "' is malformed");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    json& next = (*cur)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ValidationError(key.substr(0, dot) + ": not an object");
    cur = &next;
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

QNetConfig variant_config(const QNetConfig& base, const std::string& variant) {
  QNetConfig c = base;
  if (variant == "full") {
    c.use_pruning = true;
    c.use_attention = true;
  } else if (variant == "attention_only") {
    c.use_pruning = false;
    c.use_attention = true;
  } else if (variant == "no_attention") {
    c.use_pruning = true;
    c.use_attention = false;
  } else if (variant == "neither") {
    c.use_pruning = false;
    c.use_attention = false;
  } else {
    throw ValidationError("unknown policy variant " + variant);
  }
  return c;
}

json to_json(const QNetConfig& c) {
  json j = json::object();
  Writer w(j);
  visit_qnet(w, c);
  return j;
}

QNetConfig qnet_config_from_json(const json& j) {
  QNetConfig c;
  Reader r(j);
  visit_qnet(r, c);
  r.check_unknown();
  return c;
}

json to_json(const PredictorConfig& c) {
  json j = json::object();
  Writer w(j);
  visit_predictor(w, c);
  return j;
}

PredictorConfig predictor_config_from_json(const json& j) {
  PredictorConfig c;
  Reader r(j);
  visit_predictor(r, c);
  r.check_unknown();
  return c;
}

}  // namespace trajaware
