#include "topoaug/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "topoaug/error.hpp"
#include "topoaug/format.hpp"

namespace topoaug {

namespace fs = std::filesystem;

std::vector<FlowRecord> evaluation_trace(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.workload.trace.empty()) {
    return load_trace(cfg.workload.trace, static_cast<int>(make_topology(cfg).rack_count()));
  }
  return synthesize_trace(make_synth_params(cfg, seed));
}

std::unique_ptr<LinkPolicy> make_policy(const std::string& name, const RunConfig&,
                                        const ModelParams<float>* model, std::uint64_t seed) {
  if (name == "static") return std::make_unique<StaticPolicy>();
  if (name == "random") return std::make_unique<RandomPolicy>(seed);
  if (name == "greedy") return std::make_unique<GreedyPolicy>();
  if (name == "optimal") return std::make_unique<OptimalPolicy>();
  if (name == "agent") {
    if (!model) throw ConfigError("policy 'agent' needs --checkpoint");
    return std::make_unique<AgentPolicy>(*model);
  }
  throw ConfigError("unknown policy '" + name + "' (expected agent, static, random, greedy or optimal)");
}

ModelParams<float> load_agent(const RunConfig& cfg, const fs::path& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("policy 'agent' needs --checkpoint");
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  const Architecture arch = architecture_for(make_topology(cfg), cfg.agent.layers);
  try {
    return load_checkpoint(checkpoint, &arch).model;
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

std::optional<double> percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q * static_cast<double>(values.size()));
  const std::size_t index = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  return values[std::min(index, values.size() - 1)];
}

EvalOutcome run_eval(const RunConfig& cfg, const std::string& policy, const ModelParams<float>* model,
                     std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  EvalOutcome outcome;
  outcome.policy = policy;
  outcome.seed = seed;
  auto chosen = make_policy(policy, cfg, model, seed);
  Simulator sim(make_topology(cfg), evaluation_trace(cfg, seed), make_sim_config(cfg));
  outcome.result = rollout(std::move(sim), *chosen);

  std::vector<double> fcts;
  for (const CompletedFlow& f : outcome.result.fct.flows) fcts.push_back(f.fct_s);
  if (!fcts.empty()) {
    outcome.mean_fct = std::accumulate(fcts.begin(), fcts.end(), 0.0) / static_cast<double>(fcts.size());
  }
  outcome.p95_fct = percentile(fcts, 0.95);
  outcome.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

std::string eval_summary_json(const EvalOutcome& o) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::ordered_json j;
  j["policy"] = o.policy;
  j["seed"] = o.seed;
  j["completed_flows"] = o.result.fct.flows.size();
  j["steps"] = o.result.actions.size();
  j["median_fct_s"] = opt(o.result.fct.median);
  j["mean_fct_s"] = opt(o.mean_fct);
  j["p95_fct_s"] = opt(o.p95_fct);
  j["total_reward"] = o.result.total_reward;
  j["runtime_s"] = o.runtime_s;
  return j.dump(2) + "\n";
}

namespace {

std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string topology_label(const RunConfig& cfg) {
  const TopologySection& t = cfg.topology;
  if (t.kind == TopologyKind::fattree) return "fattree-k" + std::to_string(t.k);
  return "vl2-" + std::to_string(t.vl2_tor) + "-" + std::to_string(t.vl2_agg) + "-" +
         std::to_string(t.vl2_int) + "-" + std::to_string(t.vl2_hosts_per_tor);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string policy = "agent";
  std::string checkpoint;
  bool resume = false;
};

RunConfig effective_config(const Options& opts) {
  RunConfig cfg = opts.config.empty() ? RunConfig{} : RunConfig::load(opts.config);
  for (const std::string& o : opts.overrides) cfg.set(o);
  if (opts.seed) {
    cfg.workload.seed = *opts.seed;
    cfg.agent.seed = *opts.seed;
  }
  if (!opts.out_dir.empty()) cfg.output.dir = opts.out_dir;
  cfg.agent.checkpoint_every = cfg.output.checkpoint_every;
  cfg.validate();
  return cfg;
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.output.dir;
  fs::create_directories(dir);
  write_file(dir / "effective_config.ini", cfg.dump());
  return dir;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const std::vector<FlowRecord> trace = synthesize_trace(make_synth_params(cfg, cfg.workload.seed));
  write_trace(dir / "trace.csv", trace);
  out << "wrote " << trace.size() << " flows to " << (dir / "trace.csv").string() << "\n";
  return kExitOk;
}

// Keeps the rows of an earlier log whose episode precedes `next_episode`.
std::string surviving_log(const fs::path& path, long long next_episode) {
  std::ifstream in(path);
  std::string line, kept;
  if (!in) return kept;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < next_episode) kept += line + "\n";
  }
  return kept;
}

int cmd_train(const RunConfig& cfg, const Options& opts, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const fs::path ckpt_dir = dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  const Topology topo = make_topology(cfg);
  const SimConfig sim_cfg = make_sim_config(cfg);

  TrainIo io;
  io.checkpoint_dir = ckpt_dir;
  std::string previous;
  if (opts.resume) {
    const fs::path from = opts.checkpoint.empty() ? ckpt_dir / "latest.ckpt" : fs::path(opts.checkpoint);
    if (!fs::exists(from)) throw ConfigError("--resume: no checkpoint at " + from.string());
    const Architecture arch = architecture_for(topo, cfg.agent.layers);
    try {
      io.resume = load_checkpoint(from, &arch);
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    const auto it = io.resume->meta.find("next_episode");
    if (it == io.resume->meta.end()) throw ConfigError("--resume: checkpoint has no training progress");
    previous = surviving_log(dir / "training_log.csv", std::stoll(it->second));
  }

  std::ofstream log = open_output(dir / "training_log.csv");
  log << "episode,worker,total_reward,loss,lr\n" << previous;
  log.flush();
  io.on_episode = [&log](const EpisodeStats& s) {
    write_training_log(log, std::span<const EpisodeStats>(&s, 1), false);
    log.flush();
  };

  std::shared_ptr<const std::vector<FlowRecord>> fixed;
  if (!cfg.workload.trace.empty()) {
    fixed = std::make_shared<const std::vector<FlowRecord>>(
        load_trace(cfg.workload.trace, static_cast<int>(topo.rack_count())));
  }
  const EpisodeSource source = [&](long long episode) {
    if (fixed) return Simulator(topo, fixed, sim_cfg);
    return Simulator(topo, synthesize_trace(make_synth_params(cfg, training_trace_seed(cfg.workload.seed, episode))),
                     sim_cfg);
  };

  const TrainResult result = train(topo, source, cfg.agent, io);
  Checkpoint final_ckpt;
  final_ckpt.model = result.model;
  final_ckpt.meta["topology"] = topology_label(cfg);
  save_checkpoint(dir / "model.ckpt", final_ckpt);
  out << "trained " << result.log.size() << " episodes; model at " << (dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const Options& opts, std::ostream& out) {
  std::optional<ModelParams<float>> model;
  if (opts.policy == "agent") model = load_agent(cfg, opts.checkpoint);
  make_policy(opts.policy, cfg, model ? &*model : nullptr, 0);
  const fs::path dir = prepare_output(cfg);
  const EvalOutcome outcome = run_eval(cfg, opts.policy, model ? &*model : nullptr, cfg.workload.seed);
  {
    std::ofstream fct = open_output(dir / "fct.csv");
    write_fct_csv(fct, outcome.result.fct);
  }
  {
    std::ofstream actions = open_output(dir / "actions.csv");
    write_action_trace(actions, outcome.result);
  }
  write_file(dir / "summary.json", eval_summary_json(outcome));
  out << opts.policy << ": median FCT " << (outcome.result.fct.median ? format_double(*outcome.result.fct.median) : "n/a")
      << " s over " << outcome.result.fct.flows.size() << " flows\n";
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg, const Options& opts, std::ostream& out) {
  const ModelParams<float> model = load_agent(cfg, opts.checkpoint);
  const fs::path dir = prepare_output(cfg);
  const std::vector<std::string> policies{"static", "random", "greedy", "optimal", "agent"};
  const std::string label = topology_label(cfg);

  std::map<std::string, std::vector<std::optional<double>>> medians;
  std::ofstream table = open_output(dir / "compare.csv");
  table << "topology,policy,seed,median_fct_s,mean_fct_s,p95_fct_s,total_reward,completed_flows\n";
  for (int i = 0; i < cfg.workload.eval_seeds; ++i) {
    const std::uint64_t seed = cfg.workload.seed + static_cast<std::uint64_t>(i);
    for (const std::string& name : policies) {
      const EvalOutcome o = run_eval(cfg, name, &model, seed);
      medians[name].push_back(o.result.fct.median);
      table << label << ',' << name << ',' << seed << ',' << opt_text(o.result.fct.median) << ','
            << opt_text(o.mean_fct) << ',' << opt_text(o.p95_fct) << ',' << format_double(o.result.total_reward)
            << ',' << o.result.fct.flows.size() << '\n';
    }
  }

  auto mean_of = [](const std::vector<std::optional<double>>& v) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& x : v) {
      if (x) {
        sum += *x;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  const std::optional<double> optimal_mean = mean_of(medians["optimal"]);
  std::ofstream summary = open_output(dir / "compare_summary.csv");
  summary << "topology,policy,seeds,mean_median_fct_s,ratio_to_optimal,wins_vs_random\n";
  for (const std::string& name : policies) {
    const auto m = mean_of(medians[name]);
    std::optional<double> ratio;
    if (m && optimal_mean && *optimal_mean > 0.0) ratio = *m / *optimal_mean;
    int wins = 0;
    for (std::size_t s = 0; s < medians[name].size(); ++s) {
      const auto& a = medians[name][s];
      const auto& r = medians["random"][s];
      if (a && r && *a < *r) ++wins;
    }
    summary << label << ',' << name << ',' << cfg.workload.eval_seeds << ',' << opt_text(m) << ','
            << opt_text(ratio) << ',' << wins << '\n';
    out << name << ": mean median FCT " << (m ? format_double(*m) : "n/a") << " s, ratio to optimal "
        << (ratio ? format_double(*ratio) : "n/a") << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-level data-center simulator with a learned optical topology-augmentation agent"};
  app.require_subcommand(1);
  Options opts;

  auto common = [&opts](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "Configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "Seed for workload and agent");
    cmd->add_option("--set", opts.overrides, "Override a key: section.key=value (repeatable)");
    cmd->add_option("--out", opts.out_dir, "Output directory");
  };
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic flow trace");
  common(synth);
  CLI::App* train_cmd = app.add_subcommand("train", "Train the agent");
  common(train_cmd);
  train_cmd->add_flag("--resume", opts.resume, "Continue from the latest checkpoint");
  train_cmd->add_option("--checkpoint", opts.checkpoint, "Checkpoint to resume from");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate one policy on one trace");
  common(eval);
  eval->add_option("--policy", opts.policy, "agent, static, random, greedy or optimal");
  eval->add_option("--checkpoint", opts.checkpoint, "Agent checkpoint");
  CLI::App* compare = app.add_subcommand("compare", "Run every policy on paired seeds");
  common(compare);
  compare->add_option("--checkpoint", opts.checkpoint, "Agent checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const RunConfig cfg = effective_config(opts);
    if (synth->parsed()) return cmd_synth(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, opts, out);
    if (eval->parsed()) return cmd_eval(cfg, opts, out);
    return cmd_compare(cfg, opts, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "invalid parameter: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "trace error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace topoaug
