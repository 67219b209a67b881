#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "topoaug/agent.hpp"
#include "topoaug/simulator.hpp"
#include "topoaug/topology.hpp"
#include "topoaug/workload.hpp"

namespace topoaug {

enum class TopologyKind { fattree, vl2 };

struct TopologySection {
  TopologyKind kind = TopologyKind::fattree;
  int k = 4;
  int vl2_tor = 8;
  int vl2_agg = 4;
  int vl2_int = 2;
  int vl2_hosts_per_tor = 2;
  TopologyOptions options;
  double switch_delay = 0.0;
};

struct WorkloadSection {
  std::string trace;  // empty: synthesize
  std::uint64_t seed = 1;
  int flow_count = 100;
  double arrival_rate = 10.0;
  SizeDistribution sizes;
  double hotspot_fraction = 0.8;
  std::vector<RackPair> hotspot_pairs{{0, 4}, {1, 5}, {2, 6}, {3, 7}};
  int eval_seeds = 10;
};

struct OutputSection {
  std::string dir = "out";
  int checkpoint_every = 10;
};

// Everything a command needs, parsed from a sectioned key = value file:
//
//   # comment
//   [section]
//   key = value
//
// Keys are validated against fixed types and ranges; unknown sections or
// keys are rejected.
struct RunConfig {
  TopologySection topology;
  WorkloadSection workload;
  SimConfig sim;
  TrainConfig agent;
  OutputSection output;

  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::filesystem::path& path);

  // Applies one "section.key=value" override.
  void set(const std::string& assignment);
  void set(const std::string& section, const std::string& key, const std::string& value);

  void validate() const;
  // Effective configuration with every key spelled out; parses back to an
  // identical config.
  std::string dump() const;
};

Topology make_topology(const RunConfig& cfg);
SimConfig make_sim_config(const RunConfig& cfg);
SynthParams make_synth_params(const RunConfig& cfg, std::uint64_t seed);
// Trace seed for a training episode; a stream separate from evaluation seeds.
std::uint64_t training_trace_seed(std::uint64_t seed, long long episode);

}  // namespace topoaug
