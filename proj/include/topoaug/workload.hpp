#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "topoaug/topology.hpp"

namespace topoaug {

struct FlowRecord {
  std::uint64_t flow_id = 0;
  double arrival_s = 0.0;
  int src_rack = 0;
  int dst_rack = 0;
  std::uint64_t bytes = 0;

  friend bool operator==(const FlowRecord&, const FlowRecord&) = default;
};

// Spliced flow-size law: log-normal below `pareto_min`, Pareto(alpha,
// pareto_min) above it. The tail carries exactly the log-normal's mass above
// `pareto_min`.
struct SizeDistribution {
  double lognormal_mu = 11.5;
  double lognormal_sigma = 1.5;
  double pareto_alpha = 1.5;
  double pareto_min = 1e6;

  void validate() const;
  // Closed-form mean of the spliced law, in bytes.
  double mean() const;
};

struct SynthParams {
  std::uint64_t seed = 1;
  int rack_count = 8;
  int flow_count = 100;
  double arrival_rate = 10.0;  // flows per second
  SizeDistribution sizes;
  double hotspot_fraction = 0.0;
  std::vector<RackPair> hotspot_pairs;

  void validate() const;
};

std::vector<FlowRecord> load_trace(const std::filesystem::path& path, int rack_count);
std::vector<FlowRecord> parse_trace(std::istream& in, int rack_count);
void write_trace(std::ostream& out, std::span<const FlowRecord> flows);
void write_trace(const std::filesystem::path& path, std::span<const FlowRecord> flows);

std::vector<FlowRecord> synthesize_trace(const SynthParams& params);

// Bytes a single flow moved between two racks during a window.
struct RackTransfer {
  int src_rack = 0;
  int dst_rack = 0;
  double bytes = 0.0;
};

struct TrafficMatrix {
  double window_start = 0.0;
  double window_end = 0.0;
  std::size_t racks = 0;
  // Normalized by the largest cell; all zero when nothing moved.
  std::vector<double> cells;
  // Largest unnormalized cell, in bytes (0 when idle).
  double peak_bytes = 0.0;
  // Sum of unnormalized cells, in bytes.
  double total_bytes = 0.0;

  double at(std::size_t i, std::size_t j) const { return cells[i * racks + j]; }
};

TrafficMatrix traffic_matrix(std::span<const RackTransfer> transfers, double t0, double t1,
                             int rack_count);

}  // namespace topoaug
