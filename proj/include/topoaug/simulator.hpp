#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "topoaug/topology.hpp"
#include "topoaug/workload.hpp"

namespace topoaug {

struct SimConfig {
  double step_seconds = 1.0;
  // Multiply each flow's reward term by its path's link count.
  bool reward_per_link = true;
  // Newly switched optical links carry no traffic for this long into a step.
  double switch_delay = 0.0;

  void validate() const;
};

// Lower bound on a flow's duration inside the reward.
inline constexpr double kMinFlowDuration = 1e-6;

struct FlowState {
  FlowRecord record;
  Path path;
  std::vector<int> links;
  double remaining = 0.0;  // bytes
  double start_time = 0.0;
  std::optional<double> finish_time;
  double transferred_this_step = 0.0;
  double transferred_total = 0.0;
  double rate_bps = 0.0;
};

struct CompletedFlow {
  std::uint64_t flow_id = 0;
  double arrival_s = 0.0;
  double fct_s = 0.0;
  std::uint64_t bytes = 0;
};

struct StepReport {
  std::uint64_t step_index = 0;
  double time = 0.0;
  double reward = 0.0;
  TrafficMatrix traffic;
  AdjacencyState adjacency;
  std::vector<CompletedFlow> completed;
  std::size_t active_flow_count = 0;
  double bytes_transferred = 0.0;
  bool done = false;
};

// One term of the step reward: a flow's link count, bytes moved this step and
// duration so far (or total duration when it finished).
struct RewardTerm {
  int links = 0;
  double bytes = 0.0;
  double duration = 0.0;
};

double compute_reward(std::span<const RewardTerm> terms, bool per_link = true);

// Max-min fair rates by progressive filling. `flow_links[f]` lists the links
// flow f crosses; a flow with no links gets rate 0.
std::vector<double> max_min_rates(std::span<const std::vector<int>> flow_links,
                                  std::span<const double> capacities);

// 64-bit mix used to pin a flow to one of its ECMP paths (splitmix64 finalizer).
std::uint64_t ecmp_hash(std::uint64_t flow_id);

struct FctSummary {
  std::vector<CompletedFlow> flows;  // ascending flow_id
  std::optional<double> median;
};

std::optional<double> median_of(std::vector<double> values);

// Fluid flow-level simulator. Copying a Simulator yields an independent
// snapshot; the trace itself is shared read-only.
class Simulator {
 public:
  Simulator(Topology topology, std::vector<FlowRecord> trace, SimConfig config = {});
  Simulator(Topology topology, std::shared_ptr<const std::vector<FlowRecord>> trace,
            SimConfig config = {});

  // Returns to time zero with every optical link off and reports the initial state.
  StepReport reset();

  // Activates exactly `chosen` (candidate indices). Flows are re-pinned only
  // when the active set changes. Returns the change flag.
  bool apply_action(std::span<const int> chosen);

  // Advances one step of `step_seconds`.
  StepReport step();

  bool done() const;
  double now() const { return now_; }
  std::uint64_t step_index() const { return step_index_; }
  const Topology& topology() const { return topology_; }
  const SimConfig& config() const { return config_; }
  const std::vector<FlowState>& active_flows() const { return active_; }
  const std::vector<CompletedFlow>& completed_flows() const { return completed_; }
  std::size_t trace_size() const { return trace_->size(); }
  double total_transferred() const { return total_transferred_; }

  FctSummary fct_summary() const;

 private:
  struct RoutedPath {
    Path nodes;
    std::vector<int> links;
  };

  const std::vector<RoutedPath>& routes(int src_rack, int dst_rack);
  void pin(FlowState& flow);
  std::vector<double> current_rates(double at) const;
  StepReport make_report(double reward, TrafficMatrix traffic, std::vector<CompletedFlow> done_now,
                         double bytes) const;

  Topology topology_;
  std::shared_ptr<const std::vector<FlowRecord>> trace_;
  SimConfig config_;

  double now_ = 0.0;
  std::uint64_t step_index_ = 0;
  std::size_t next_arrival_ = 0;
  std::vector<FlowState> active_;
  std::vector<CompletedFlow> completed_;
  double total_transferred_ = 0.0;

  std::vector<int> switching_links_;
  double switching_until_ = 0.0;

  // Per ordered rack pair; empty until first use after a topology change.
  std::vector<std::vector<RoutedPath>> route_cache_;
};

void write_fct_csv(std::ostream& out, const FctSummary& summary);
std::string step_report_json(const StepReport& report);

}  // namespace topoaug
