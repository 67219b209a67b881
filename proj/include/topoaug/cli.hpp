#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "topoaug/agent.hpp"
#include "topoaug/baselines.hpp"
#include "topoaug/config.hpp"

namespace topoaug {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

// Trace used for evaluation under `seed`: the configured trace file when one
// is set, otherwise a synthetic trace drawn with that seed.
std::vector<FlowRecord> evaluation_trace(const RunConfig& cfg, std::uint64_t seed);

// Builds a baseline or agent policy by name. `model` is required for "agent".
std::unique_ptr<LinkPolicy> make_policy(const std::string& name, const RunConfig& cfg,
                                        const ModelParams<float>* model, std::uint64_t seed);

// Loads a checkpoint and checks it against the configured topology.
ModelParams<float> load_agent(const RunConfig& cfg, const std::filesystem::path& checkpoint);

struct EvalOutcome {
  std::string policy;
  std::uint64_t seed = 0;
  EpisodeResult result;
  std::optional<double> mean_fct;
  std::optional<double> p95_fct;
  double runtime_s = 0.0;
};

EvalOutcome run_eval(const RunConfig& cfg, const std::string& policy, const ModelParams<float>* model,
                     std::uint64_t seed);

// Nearest-rank percentile of `values`; empty input gives no value.
std::optional<double> percentile(std::vector<double> values, double q);

// {"policy":..., "median_fct_s":..., ...}; absent statistics are null.
std::string eval_summary_json(const EvalOutcome& outcome);

// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace topoaug
