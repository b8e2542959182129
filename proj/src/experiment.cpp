#include "trajaware/experiment.hpp"

#include <fstream>
#include <memory>

#include "trajaware/checkpoint.hpp"
#include "trajaware/errors.hpp"

namespace trajaware {

namespace fs = std::filesystem;
using nlohmann::json;

WorldData generate_world(const RunConfig& cfg, int index) {
  const auto& w = cfg.world;
  const auto i = static_cast<std::uint64_t>(index);
  WorldData d;
  d.map = generate_map(derive_seed(cfg.seed, 1000 + i), w.grid_cols, w.grid_rows, w.cell_size,
                       w.perturbation);
  const double density = calibrate_density(d.map, w.target_active, w.traffic);
  d.trace = generate_traffic(d.map, derive_seed(cfg.seed, 2000 + i), w.duration, density,
                             w.traffic);
  return d;
}

std::vector<WorldData> generate_worlds(const RunConfig& cfg) {
  std::vector<WorldData> out;
  for (int i = 0; i < cfg.world.maps; ++i) out.push_back(generate_world(cfg, i));
  return out;
}

fs::path map_file(const fs::path& dir, int index) {
  return dir / ("map_" + std::to_string(index) + ".json");
}

fs::path trace_file(const fs::path& dir, int index) {
  return dir / ("trace_" + std::to_string(index) + ".csv");
}

void write_worlds(const std::vector<WorldData>& worlds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < worlds.size(); ++i) {
    save_map(worlds[i].map, map_file(dir, static_cast<int>(i)));
    save_trace(worlds[i].map, worlds[i].trace, trace_file(dir, static_cast<int>(i)));
  }
}

std::vector<WorldData> load_or_generate_worlds(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir / "maps";
  bool present = true;
  for (int i = 0; i < cfg.world.maps && present; ++i)
    present = fs::exists(map_file(dir, i)) && fs::exists(trace_file(dir, i));
  if (!present) return generate_worlds(cfg);
  std::vector<WorldData> out;
  for (int i = 0; i < cfg.world.maps; ++i) {
    WorldData d;
    d.map = load_map(map_file(dir, i));
    d.trace = load_trace(trace_file(dir, i), d.map);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<World> training_worlds(const std::vector<WorldData>& worlds, int held_out) {
  std::vector<World> out;
  for (std::size_t i = 0; i < worlds.size(); ++i)
    if (static_cast<int>(i) != held_out) out.push_back(worlds[i].view());
  return out;
}

void write_config_echo(const RunConfig& cfg, const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void save_predictor(const fs::path& path, const Predictor& p) {
  save_checkpoint(path, p.named(), {{"kind", "predictor"}, {"config", to_json(p.config)}});
}

namespace {
json read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in).at("meta");
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}
}  // namespace

Predictor load_predictor(const fs::path& path) {
  const json meta = read_meta(path);
  if (meta.value("kind", "") != "predictor")
    throw ValidationError(path.string() + " is not a predictor checkpoint");
  Predictor p = Predictor::zeros(predictor_config_from_json(meta.at("config")));
  load_checkpoint(path, p.named());
  return p;
}

void save_policy(const fs::path& path, const QNetParams& p) {
  save_checkpoint(path, p.named(), {{"kind", "policy"}, {"config", to_json(p.config)}});
}

QNetParams load_policy(const fs::path& path, const QNetConfig& expected) {
  const json meta = read_meta(path);
  if (meta.value("kind", "") != "policy")
    throw ValidationError(path.string() + " is not a policy checkpoint");
  if (meta.at("config") != to_json(expected))
    throw ValidationError(path.string() + ": architecture " + meta.at("config").dump() +
                          " does not match the configured " + to_json(expected).dump());
  QNetParams p = QNetParams::init(expected, 0);
  load_checkpoint(path, p.named());
  return p;
}

Predictor train_predictor_on(const RunConfig& cfg, const std::vector<WorldData>& worlds) {
  std::vector<MapTrace> data;
  for (std::size_t i = 0; i < worlds.size(); ++i)
    if (static_cast<int>(i) != cfg.world.held_out)
      data.push_back({&worlds[i].map, &worlds[i].trace});
  return train_predictor(data, cfg.predictor, cfg.predictor_train).predictor;
}

TrainingResult train_policy_on(const RunConfig& cfg, const std::vector<WorldData>& worlds,
                               const QNetConfig& net, const fs::path& checkpoint_dir) {
  TrainConfig t = cfg.train;
  t.checkpoint_dir = checkpoint_dir;
  const auto train_worlds = training_worlds(worlds, cfg.world.held_out);
  return run_training(train_worlds, net, t, cfg.seed,
                      [](const fs::path& p, const QNetParams& q) { save_policy(p, q); });
}

std::string cell_name(const EvalCell& c) {
  return c.variant + "_" + std::string(observation_name(c.observation)) + "_" +
         std::string(congestion_name(c.congestion));
}

json evaluate_cells(const RunConfig& cfg, const WorldData& held_out,
                    const std::map<std::string, QNetParams>& policies,
                    const Predictor* predictor, const fs::path& out_dir) {
  json doc;
  doc["config"] = to_json(cfg);
  doc["warmup_rounds"] = cfg.sim.warmup_rounds;
  doc["cells"] = json::array();
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }
  const World world = held_out.view();
  const std::vector<std::string> q_variants =
      cfg.eval.policy == "q" ? cfg.eval.variants : std::vector<std::string>{cfg.eval.policy};
  for (const auto& variant : q_variants) {
    std::unique_ptr<RoutingPolicy> policy;
    if (cfg.eval.policy == "oracle") {
      policy = std::make_unique<OraclePolicy>();
    } else if (cfg.eval.policy == "random") {
      policy = std::make_unique<RandomPolicy>(cfg.sim.k_max);
    } else {
      auto it = policies.find(variant);
      if (it == policies.end()) throw ValidationError("no trained policy for variant " + variant);
      policy = std::make_unique<QRoutingPolicy>(it->second, 0.0, false);
    }
    for (const auto& obs : cfg.eval.observations)
      for (const auto& cong : cfg.eval.congestion) {
        EvalCell cell{variant, obs == "partial" ? Observation::Partial : Observation::Complete,
                      cong == "on" ? CongestionMode::On : CongestionMode::Off};
        SimOptions sim = cfg.sim;
        sim.observation = cell.observation;
        sim.congestion = cell.congestion;
        sim.predictor = predictor;
        if (cell.observation == Observation::Partial && !predictor)
          throw ValidationError("partial observation needs a trained predictor");
        const Evaluation ev = evaluate(world, *policy, cfg.eval.episodes, sim, cfg.eval.seed);
        json c;
        c["variant"] = variant;
        c["policy"] = cfg.eval.policy;
        c["observation"] = observation_name(cell.observation);
        c["congestion"] = congestion_name(cell.congestion);
        c["summary"] = summary_json(ev.summary);
        if (!out_dir.empty()) {
          const std::string csv = "results_" + cell_name(cell) + ".csv";
          write_results_csv(out_dir / csv, ev.episodes);
          c["results_csv"] = csv;
        }
        doc["cells"].push_back(std::move(c));
      }
  }
  return doc;
}

}  // namespace trajaware
