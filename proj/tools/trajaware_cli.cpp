// trajaware: generate worlds, train the predictor and routing policies,
// evaluate them. Exit codes: 0 ok, 1 validation, 2 training failure, 3 I/O.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "trajaware/errors.hpp"
#include "trajaware/experiment.hpp"

namespace fs = std::filesystem;
using namespace trajaware;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON run configuration (defaults when omitted)");
  cmd->add_option("--set", c.overrides, "Override a field, e.g. --set train.episodes=100")
      ->take_all();
}

RunConfig load(const Common& c) { return load_run_config(c.config, c.overrides); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void cmd_generate(const RunConfig& cfg) {
  const auto worlds = generate_worlds(cfg);
  write_worlds(worlds, cfg.output_dir / "maps");
  write_config_echo(cfg, cfg.output_dir / "maps" / "config_echo.json");
  for (std::size_t i = 0; i < worlds.size(); ++i)
    std::cout << "map " << i << ": " << worlds[i].map.nodes().size() << " nodes, "
              << worlds[i].trace.size() << " frames\n";
}

void cmd_train_predictor(const RunConfig& cfg) {
  const auto worlds = load_or_generate_worlds(cfg);
  const Predictor p = train_predictor_on(cfg, worlds);
  save_predictor(cfg.output_dir / "predictor.json", p);
  const auto& held = worlds[cfg.world.held_out];
  const auto table =
      prediction_error_table(p, {&held.map, &held.trace}, 9, 1000, cfg.eval.seed);
  write_error_report(cfg.output_dir / "predictor_errors.csv", table);
  write_config_echo(cfg, cfg.output_dir / "predictor_config.json");
  for (const auto& b : table)
    std::cout << "missing_steps " << b.missing_steps << ": " << b.mean_error_m << " m over "
              << b.count << " samples\n";
}

fs::path policy_path(const RunConfig& cfg, const std::string& variant) {
  return cfg.output_dir / ("policy_" + variant + ".json");
}

void train_variant(const RunConfig& cfg, const std::vector<WorldData>& worlds,
                   const std::string& variant) {
  const QNetConfig net = variant_config(cfg.net, variant);
  const auto ckpt_dir = cfg.output_dir / "checkpoints" / variant;
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  if (ec) throw IoError("cannot create " + ckpt_dir.string());
  const TrainingResult r = train_policy_on(cfg, worlds, net, ckpt_dir);
  save_policy(policy_path(cfg, variant), r.params);
  write_training_log(cfg.output_dir / ("train_log_" + variant + ".csv"), r.log);
  if (!r.log.empty()) {
    const auto& last = r.log.back();
    std::cout << variant << ": " << last.steps << " steps, last window rr " << last.rr
              << ", pspr " << last.pspr << '\n';
  }
}

void cmd_train_policy(const RunConfig& cfg, const std::vector<std::string>& variants) {
  const auto worlds = load_or_generate_worlds(cfg);
  for (const auto& v : variants) train_variant(cfg, worlds, v);
  write_config_echo(cfg, cfg.output_dir / "policy_config.json");
}

void run_eval(const RunConfig& cfg, const std::map<std::string, fs::path>& checkpoints,
              const std::string& predictor_file) {
  const auto worlds = load_or_generate_worlds(cfg);
  std::map<std::string, QNetParams> policies;
  if (cfg.eval.policy == "q")
    for (const auto& v : cfg.eval.variants) {
      auto it = checkpoints.find(v);
      const fs::path path = it != checkpoints.end() ? it->second : policy_path(cfg, v);
      policies.emplace(v, load_policy(path, variant_config(cfg.net, v)));
    }
  std::unique_ptr<Predictor> predictor;
  const bool partial = std::find(cfg.eval.observations.begin(), cfg.eval.observations.end(),
                                 "partial") != cfg.eval.observations.end();
  if (partial) {
    const fs::path path = predictor_file.empty() ? cfg.output_dir / "predictor.json"
                                                 : fs::path(predictor_file);
    predictor = std::make_unique<Predictor>(load_predictor(path));
  }
  const fs::path out = cfg.output_dir / "eval";
  const auto doc = evaluate_cells(cfg, worlds[cfg.world.held_out], policies, predictor.get(), out);
  write_json(out / "summary.json", doc);
  write_config_echo(cfg, out / "config_echo.json");
  for (const auto& c : doc["cells"])
    std::cout << c["variant"].get<std::string>() << " / " << c["observation"].get<std::string>()
              << " / " << c["congestion"].get<std::string>() << ": spr "
              << c["summary"]["avg_spr"].get<double>() << ", pspr "
              << c["summary"]["avg_pspr"].get<double>() << ", rr "
              << c["summary"]["rr"].get<double>() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-aware DQN packet routing for vehicular networks"};
  app.require_subcommand(1);

  Common gen, tp, tpol, ev, abl;
  auto* c_gen = app.add_subcommand("generate", "Generate maps and traffic traces");
  add_common(c_gen, gen);

  auto* c_tp = app.add_subcommand("train-predictor", "Train the trajectory predictor");
  add_common(c_tp, tp);

  std::vector<std::string> train_variants{"full"};
  auto* c_tpol = app.add_subcommand("train-policy", "Train routing policies");
  add_common(c_tpol, tpol);
  c_tpol->add_option("--variant", train_variants, "full, attention_only, no_attention, neither")
      ->take_all();

  std::string checkpoint, predictor_file, eval_policy;
  auto* c_ev = app.add_subcommand("eval", "Evaluate on the held-out map");
  add_common(c_ev, ev);
  c_ev->add_option("--checkpoint", checkpoint, "Policy checkpoint for the first variant");
  c_ev->add_option("--predictor", predictor_file, "Predictor checkpoint");
  c_ev->add_option("--policy", eval_policy, "q, oracle or random");

  auto* c_abl = app.add_subcommand("ablate", "Train and evaluate every ablation variant");
  add_common(c_abl, abl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_gen) {
      cmd_generate(load(gen));
    } else if (*c_tp) {
      cmd_train_predictor(load(tp));
    } else if (*c_tpol) {
      const RunConfig cfg = load(tpol);
      for (const auto& v : train_variants) variant_config(cfg.net, v);
      cmd_train_policy(cfg, train_variants);
    } else if (*c_ev) {
      auto overrides = ev.overrides;
      if (!eval_policy.empty()) overrides.push_back("eval.policy=\"" + eval_policy + "\"");
      const RunConfig cfg = load_run_config(ev.config, overrides);
      std::map<std::string, fs::path> ckpts;
      if (!checkpoint.empty() && !cfg.eval.variants.empty())
        ckpts[cfg.eval.variants.front()] = checkpoint;
      run_eval(cfg, ckpts, predictor_file);
    } else if (*c_abl) {
      auto overrides = abl.overrides;
      overrides.push_back(R"(eval.variants=["full","attention_only","no_attention","neither"])");
      const RunConfig cfg = load_run_config(abl.config, overrides);
      cmd_train_policy(cfg, cfg.eval.variants);
      run_eval(cfg, {}, "");
    }
  } catch (const TrainingFailure& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    if (!e.stable_checkpoint().empty())
      std::cerr << "last stable checkpoint: " << e.stable_checkpoint() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
