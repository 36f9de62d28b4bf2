// mapgo command-line entry point.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mapgo/bench.hpp"
#include "mapgo/checkpoint.hpp"
#include "mapgo/config.hpp"
#include "mapgo/errors.hpp"
#include "mapgo/g2o_io.hpp"
#include "mapgo/objective.hpp"
#include "mapgo/partition.hpp"
#include "mapgo/pipeline.hpp"
#include "mapgo/sac.hpp"
#include "mapgo/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mapgo;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Config file (if any) with the command-line assignments applied on top.
json gather_settings(const std::string& config_path, const std::vector<std::string>& sets) {
  try {
    json kv = config_path.empty() ? json::object() : load_config(config_path);
    for (const auto& s : sets) apply_assignment(kv, s);
    return kv;
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

/// Settings with the wrong value type are configuration errors.
template <typename F>
auto usage_guard(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad setting value: ") + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string file_sha(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return sha256_hex(std::string(std::istreambuf_iterator<char>(in), {}));
}

/// Splits solver keys off a settings object and applies them; the rest is
/// returned untouched.
json apply_solve_settings(SolveConfig& sc, const json& kv) {
  json rest = json::object();
  for (const auto& [k, v] : kv.items()) {
    if (k == "admm_penalty") sc.admm.penalty = v.get<double>();
    else if (k == "admm_iters") sc.admm.max_iters = v.get<int>();
    else if (k == "admm_tolerance") sc.admm.tolerance = v.get<double>();
    else if (k == "admm_relaxation") sc.admm.relaxation = v.get<double>();
    else if (k == "lm_iters") sc.refine.max_iters = v.get<int>();
    else if (k == "prune") sc.prune = v.get<bool>();
    else if (k == "gate_threshold") sc.gate_threshold = v.get<double>();
    else if (k == "greedy") sc.mode = v.get<bool>() ? ActMode::Greedy : ActMode::Sample;
    else rest[k] = v;
  }
  return rest;
}

json solve_settings_json(const SolveConfig& sc) {
  return {{"admm_penalty", sc.admm.penalty},       {"admm_iters", sc.admm.max_iters},
          {"admm_tolerance", sc.admm.tolerance},   {"admm_relaxation", sc.admm.relaxation},
          {"lm_iters", sc.refine.max_iters},       {"prune", sc.prune},
          {"gate_threshold", sc.gate_threshold},   {"greedy", sc.mode == ActMode::Greedy},
          {"max_translation", sc.env.max_translation}, {"max_rotation", sc.env.max_rotation},
          {"balance_tol", sc.env.balance_tol}};
}

/// Trained actors from a model directory written by `train`, or freshly
/// initialized ones when no directory is given.
struct Model {
  TrainConfig cfg;
  std::vector<Actor> actors;
};

Model load_model(const std::string& dir, const json& overrides, std::uint64_t seed) {
  Model m;
  m.cfg = TrainConfig::desk_scale();
  if (!dir.empty()) apply_overrides(m.cfg, load_config(fs::path(dir) / "config.toml"));
  apply_overrides(m.cfg, overrides);
  nn::Rng rng(seed);
  for (int k = 0; k < m.cfg.graphs.n_robots; ++k) m.actors.emplace_back("actor" + std::to_string(k), m.cfg.actor, rng);
  if (!dir.empty()) {
    std::vector<ad::Parameter*> params;
    for (auto& a : m.actors) a.collect(params);
    load_checkpoint(fs::path(dir) / "model.ckpt", params);
  }
  return m;
}

/// Keys that describe the actor architecture; they travel with the model.
json architecture_overrides(json& kv) {
  static const std::vector<std::string> keys{"gnn_layers", "hidden", "edge_hidden", "gate_hidden", "per_layer_gates",
                                             "beta_interloop", "memory_hidden", "memory_layers", "slots",
                                             "edge_embedding", "score_hidden", "corrector_hidden",
                                             "initial_log_std"};
  json out = json::object();
  for (const auto& k : keys)
    if (kv.contains(k)) {
      out[k] = kv[k];
      kv.erase(k);
    }
  return out;
}

void env_settings(SolveConfig& sc, json& kv) {
  if (kv.contains("max_translation")) sc.env.max_translation = kv["max_translation"].get<double>(), kv.erase("max_translation");
  if (kv.contains("max_rotation")) sc.env.max_rotation = kv["max_rotation"].get<double>(), kv.erase("max_rotation");
  if (kv.contains("balance_tol")) sc.env.balance_tol = kv["balance_tol"].get<double>(), kv.erase("balance_tol");
}

void reject_leftovers(const json& kv) {
  if (!kv.empty()) throw UsageError("unknown setting '" + kv.begin().key() + "'");
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw UsageError("empty list '" + s + "'");
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed planar pose-graph optimization with learned multi-robot corrections"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    c->add_option("--set", sets, "override, key=value (repeatable)")->allow_extra_args(false);
  };

  // generate
  GenSpec gen;
  std::string noise = "V1", out_g2o, sidecar;
  auto* c_gen = app.add_subcommand("generate", "synthetic multi-robot pose graph");
  c_gen->add_option("--robots", gen.n_robots, "team size")->capture_default_str();
  c_gen->add_option("--poses", gen.poses_per_robot, "poses per robot")->capture_default_str();
  c_gen->add_option("--loop-ratio", gen.loop_ratio, "loop closures per pose")->capture_default_str();
  c_gen->add_option("--noise", noise, "V1, V2 or V3")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  c_gen->add_option("--output", out_g2o, "g2o file")->required();
  c_gen->add_option("--sidecar", sidecar, "ground-truth sidecar JSON (default: <output>.json)");

  // partition
  std::string in_g2o, out_json;
  int robots = 3;
  double balance = 0.15;
  auto* c_part = app.add_subcommand("partition", "split a pose graph among robots");
  c_part->add_option("--input", in_g2o, "g2o file")->required()->check(CLI::ExistingFile);
  c_part->add_option("--robots", robots, "team size")->capture_default_str();
  c_part->add_option("--balance", balance, "block size tolerance")->capture_default_str();
  c_part->add_option("--output", out_json, "manifest JSON (default: stdout)");

  // inject
  double fraction = 0.1;
  std::uint64_t seed = 0;
  auto* c_inj = app.add_subcommand("inject", "replace loop closures by outliers");
  c_inj->add_option("--input", in_g2o, "g2o file")->required()->check(CLI::ExistingFile);
  c_inj->add_option("--fraction", fraction, "fraction of eligible edges")->capture_default_str();
  c_inj->add_option("--seed", seed, "seed")->capture_default_str();
  c_inj->add_option("--output", out_g2o, "g2o file")->required();
  c_inj->add_option("--sidecar", sidecar, "labels JSON (default: <output>.json)");

  // refine
  int iters = 75;
  std::string log_csv;
  auto* c_ref = app.add_subcommand("refine", "Levenberg-Marquardt refinement");
  c_ref->add_option("--input", in_g2o, "g2o file")->required()->check(CLI::ExistingFile);
  c_ref->add_option("--output", out_g2o, "refined g2o file");
  c_ref->add_option("--iters", iters, "iterations")->capture_default_str();
  c_ref->add_option("--log", log_csv, "iteration log CSV");

  // train
  std::string out_dir;
  bool full_scale = false;
  auto* c_train = app.add_subcommand("train", "train per-robot actors with a centralized critic");
  add_config(c_train);
  c_train->add_option("--out", out_dir, "output directory")->required();
  c_train->add_flag("--full-scale", full_scale, "start from the full-size network defaults");
  std::optional<int> train_episodes;
  std::optional<std::uint64_t> train_seed;
  c_train->add_option("--episodes", train_episodes, "episodes (overrides the config)");
  c_train->add_option("--seed", train_seed, "seed (overrides the config)");

  // solve
  std::string model_dir, variant = "V1", trace;
  auto* c_solve = app.add_subcommand("solve", "partition, correct, reach consensus and merge");
  add_config(c_solve);
  c_solve->add_option("--input", in_g2o, "g2o file")->required()->check(CLI::ExistingFile);
  c_solve->add_option("--model", model_dir, "directory written by train (default: untrained actors)");
  c_solve->add_option("--robots", robots, "team size")->capture_default_str();
  c_solve->add_option("--variant", variant, "V1 or V2")->capture_default_str();
  c_solve->add_option("--seed", seed, "seed")->capture_default_str();
  c_solve->add_option("--output", out_g2o, "solved g2o file");
  c_solve->add_option("--out", out_dir, "directory for report.json, config.toml and trace.jsonl");

  // benchmark
  std::vector<std::string> inputs;
  int synthetic = 0, poses = 20;
  std::string team_sizes = "3", fractions, variants = "V1,V2";
  auto* c_bench = app.add_subcommand("benchmark", "solver, scaling and denoising sweeps");
  add_config(c_bench);
  c_bench->add_option("--input", inputs, "g2o datasets")->check(CLI::ExistingFile);
  c_bench->add_option("--synthetic", synthetic, "number of generated datasets")->capture_default_str();
  c_bench->add_option("--poses", poses, "poses per robot for generated datasets")->capture_default_str();
  c_bench->add_option("--noise", noise, "noise profile for generated datasets")->capture_default_str();
  c_bench->add_option("--model", model_dir, "directory written by train");
  c_bench->add_option("--team-sizes", team_sizes, "comma-separated team sizes")->capture_default_str();
  c_bench->add_option("--fractions", fractions, "comma-separated outlier fractions");
  c_bench->add_option("--variants", variants, "comma-separated variants")->capture_default_str();
  c_bench->add_option("--seed", seed, "seed")->capture_default_str();
  c_bench->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_gen) {
      gen.profile = NoiseProfile::named(noise);
      const PoseGraph g = generate(gen);
      save_g2o(g, out_g2o);
      write_sidecar(g, {}, sidecar.empty() ? out_g2o + ".json" : sidecar);
      std::cout << json{{"vertices", g.vertices.size()}, {"edges", g.edges.size()}, {"F", objective_F(g)}}.dump()
                << "\n";
    } else if (*c_part) {
      const PoseGraph g = load_g2o(in_g2o);
      const json m = partition_manifest(partition(g, robots, balance));
      if (out_json.empty()) std::cout << m.dump(2) << "\n";
      else write_text(out_json, m.dump(2) + "\n");
    } else if (*c_inj) {
      const PoseGraph g = load_g2o(in_g2o);
      const OutlierInjection inj = inject_outliers(g, fraction, seed);
      save_g2o(inj.graph, out_g2o);
      write_sidecar(inj.graph, inj.corrupted, sidecar.empty() ? out_g2o + ".json" : sidecar);
      std::cout << json{{"corrupted", inj.corrupted.size()}}.dump() << "\n";
    } else if (*c_ref) {
      const PoseGraph g = load_g2o(in_g2o);
      LMConfig lc;
      lc.max_iters = iters;
      const auto start = std::chrono::steady_clock::now();
      const LMResult r = lm_refine(g, {}, lc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!out_g2o.empty()) save_g2o(r.graph, out_g2o);
      if (!log_csv.empty()) {
        std::ostringstream os;
        os << "iter,F,damping,step_norm,accepted\n";
        for (const auto& it : r.log) {
          char buf[256];
          std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d\n", it.iter, it.objective, it.damping, it.step_norm,
                        it.accepted ? 1 : 0);
          os << buf;
        }
        write_text(log_csv, os.str());
      }
      std::cout << json{{"F_initial", r.initial_objective}, {"F_final", r.final_objective},
                        {"accepted", r.accepted_steps}, {"seconds", secs}}
                       .dump()
                << "\n";
    } else if (*c_train) {
      TrainConfig cfg = full_scale ? TrainConfig{} : TrainConfig::desk_scale();
      usage_guard([&] {
        apply_overrides(cfg, gather_settings(config_path, sets));
        return 0;
      });
      if (train_episodes) cfg.episodes = *train_episodes;
      if (train_seed) cfg.seed = *train_seed;
      cfg.validate();
      const fs::path dir(out_dir);
      fs::create_directories(dir);
      cfg.divergence_checkpoint = (dir / "divergence.ckpt").string();
      write_text(dir / "config.toml", format_config(to_json(cfg)));
      Trainer trainer(cfg);
      std::ofstream metrics(dir / "metrics.csv");
      write_metrics_csv(metrics, {}, true);
      std::vector<EpisodeMetrics> log;
      try {
        log = trainer.train([&](const EpisodeMetrics& m) {
          write_metrics_csv(metrics, {m}, false);
          metrics.flush();
        });
      } catch (const DivergenceDetected&) {
        metrics.flush();
        throw;
      }
      trainer.save(dir / "model.ckpt");
      json man = trainer.manifest(log);
      man["files"] = {{"config", "config.toml"}, {"metrics", "metrics.csv"}, {"model", "model.ckpt"}};
      man["model_sha256"] = file_sha(dir / "model.ckpt");
      write_text(dir / "manifest.json", man.dump(2) + "\n");
      std::cout << man["metrics"].dump() << "\n";
    } else if (*c_solve) {
      json kv = gather_settings(config_path, sets);
      SolveConfig sc;
      kv = usage_guard([&] { return apply_solve_settings(sc, kv); });
      usage_guard([&] {
        env_settings(sc, kv);
        return 0;
      });
      const json arch = architecture_overrides(kv);
      reject_leftovers(kv);
      const PoseGraph g = load_g2o(in_g2o);
      Model model = load_model(model_dir, arch, seed);
      sc.env.n_robots = robots;
      sc.env.max_local_edges = model.cfg.actor.slots;
      auto actors = replicate_actors(model.actors, robots);
      nn::Rng rng(seed);
      const SolveReport r = solve(g, actors, sc, parse_variant(variant), rng);
      if (!out_g2o.empty()) save_g2o(r.result, out_g2o);
      json rep{{"variant", variant_name(r.variant)}, {"F_initial", r.f_initial},  {"F_v1", r.f_v1},
               {"F_final", r.f_final},               {"steps", r.steps},          {"return", r.episode_return},
               {"admm_iterations", r.admm_iterations}, {"admm_converged", r.admm_converged},
               {"lm_accepted", r.lm_accepted},       {"pruned", r.pruned},        {"seconds", r.seconds}};
      if (!out_dir.empty()) {
        const fs::path dir(out_dir);
        json resolved = solve_settings_json(sc);
        resolved["robots"] = robots;
        resolved["variant"] = variant;
        resolved["seed"] = seed;
        resolved["model"] = model_dir;
        resolved["input"] = in_g2o;
        write_text(dir / "config.toml", format_config(resolved));
        write_text(dir / "report.json", rep.dump(2) + "\n");
        // The trace of the same seeded episode.
        MarlEnv env(sc.env);
        env.reset(g);
        nn::Rng trace_rng(seed);
        rollout(env, actors, sc.mode, trace_rng);
        std::ostringstream os;
        env.write_trace(os);
        write_text(dir / "trace.jsonl", os.str());
      }
      std::cout << rep.dump() << "\n";
    } else if (*c_bench) {
      json kv = gather_settings(config_path, sets);
      BenchConfig bc;
      kv = usage_guard([&] { return apply_solve_settings(bc.solve, kv); });
      usage_guard([&] {
        env_settings(bc.solve, kv);
        return 0;
      });
      const json arch = architecture_overrides(kv);
      reject_leftovers(kv);
      try {
        bc.team_sizes = parse_int_list(team_sizes);
        bc.outlier_fractions = parse_double_list(fractions);
      } catch (const std::logic_error&) {
        throw UsageError("bad number list");
      }
      bc.variants.clear();
      for (const auto& v : CLI::detail::split(variants, ',')) bc.variants.push_back(parse_variant(v));
      bc.seed = seed;
      Model model = load_model(model_dir, arch, seed);
      bc.solve.env.n_robots = model.cfg.graphs.n_robots;
      bc.solve.env.max_local_edges = model.cfg.actor.slots;

      std::vector<NamedGraph> data;
      for (const auto& p : inputs) data.push_back({fs::path(p).stem().string(), load_g2o(p)});
      for (int k = 0; k < synthetic; ++k) {
        GenSpec s;
        s.n_robots = model.cfg.graphs.n_robots;
        s.poses_per_robot = poses;
        s.profile = NoiseProfile::named(noise);
        s.seed = seed * 1000 + static_cast<std::uint64_t>(k);
        data.push_back({"synthetic" + std::to_string(k), generate(s)});
      }
      if (data.empty()) throw UsageError("benchmark needs --input or --synthetic");

      const fs::path dir(out_dir);
      fs::create_directories(dir);
      json resolved = solve_settings_json(bc.solve);
      resolved["team_sizes"] = bc.team_sizes;
      resolved["fractions"] = bc.outlier_fractions;
      resolved["variants"] = variants;
      resolved["seed"] = seed;
      resolved["model"] = model_dir;
      resolved["synthetic"] = synthetic;
      resolved["poses"] = poses;
      resolved["noise"] = noise;
      resolved["inputs"] = inputs;
      write_text(dir / "config.toml", format_config(resolved));

      const BenchReport rep = run_benchmark(data, model.actors, bc);
      std::ostringstream csv, timing;
      rep.write_csv(csv);
      rep.write_timing_csv(timing);
      write_text(dir / "bench.csv", csv.str());
      write_text(dir / "timing.csv", timing.str());
      const auto charts = write_scaling_charts(rep, dir);

      // Every V2 row must not exceed its V1 counterpart.
      bool dominance = true;
      for (const auto& a : rep.rows)
        for (const auto& b : rep.rows)
          if (a.kind == b.kind && a.kind != "denoise" && a.dataset == b.dataset && a.team_size == b.team_size &&
              a.variant == "V1" && b.variant == "V2" && b.f_final > a.f_final)
            dominance = false;
      json man{{"rows", rep.to_json()},
               {"v2_not_worse_than_v1", dominance},
               {"files", {"config.toml", "bench.csv", "timing.csv"}}};
      for (const auto& c : charts) man["files"].push_back(c.filename().string());
      write_text(dir / "manifest.json", man.dump(2) + "\n");
      std::cout << csv.str();
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidSpec& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
