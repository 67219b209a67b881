#include "topoaug/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "topoaug/error.hpp"
#include "topoaug/format.hpp"

namespace topoaug {

void SimConfig::validate() const {
  if (!(step_seconds > 0.0) || !std::isfinite(step_seconds)) {
    throw ParameterError("step_seconds must be positive");
  }
  if (!(switch_delay >= 0.0) || !std::isfinite(switch_delay)) {
    throw ParameterError("switch_delay must be non-negative");
  }
}

double compute_reward(std::span<const RewardTerm> terms, bool per_link) {
  double reward = 0.0;
  for (const RewardTerm& t : terms) {
    const double duration = std::max(t.duration, kMinFlowDuration);
    const double weight = per_link ? static_cast<double>(t.links) : 1.0;
    reward += weight * t.bytes / duration;
  }
  return reward;
}

std::vector<double> max_min_rates(std::span<const std::vector<int>> flow_links,
                                  std::span<const double> capacities) {
  const std::size_t num_flows = flow_links.size();
  std::vector<double> rates(num_flows, 0.0);
  std::vector<bool> frozen(num_flows, false);
  std::vector<double> spare(capacities.begin(), capacities.end());
  std::vector<int> unfrozen(capacities.size(), 0);
  std::vector<std::vector<std::size_t>> crossing(capacities.size());

  std::size_t left = 0;
  for (std::size_t f = 0; f < num_flows; ++f) {
    if (flow_links[f].empty()) {
      frozen[f] = true;
      continue;
    }
    ++left;
    for (int l : flow_links[f]) {
      ++unfrozen[static_cast<std::size_t>(l)];
      crossing[static_cast<std::size_t>(l)].push_back(f);
    }
  }

  while (left > 0) {
    std::size_t bottleneck = capacities.size();
    double share = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < capacities.size(); ++l) {
      if (unfrozen[l] == 0) continue;
      const double s = std::max(0.0, spare[l]) / unfrozen[l];
      if (s < share) {
        share = s;
        bottleneck = l;
      }
    }
    for (std::size_t f : crossing[bottleneck]) {
      if (frozen[f]) continue;
      frozen[f] = true;
      rates[f] = share;
      --left;
      for (int l : flow_links[f]) {
        spare[static_cast<std::size_t>(l)] -= share;
        --unfrozen[static_cast<std::size_t>(l)];
      }
    }
  }
  return rates;
}

std::uint64_t ecmp_hash(std::uint64_t flow_id) {
  std::uint64_t z = flow_id + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::optional<double> median_of(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Simulator::Simulator(Topology topology, std::vector<FlowRecord> trace, SimConfig config)
    : Simulator(std::move(topology),
                std::make_shared<const std::vector<FlowRecord>>(std::move(trace)), config) {}

Simulator::Simulator(Topology topology, std::shared_ptr<const std::vector<FlowRecord>> trace,
                     SimConfig config)
    : topology_(std::move(topology)), trace_(std::move(trace)), config_(config) {
  config_.validate();
  if (!trace_) throw ParameterError("simulator needs a trace");
  const auto racks = static_cast<int>(topology_.rack_count());
  double last = 0.0;
  for (const FlowRecord& f : *trace_) {
    if (f.src_rack < 0 || f.dst_rack < 0 || f.src_rack >= racks || f.dst_rack >= racks ||
        f.src_rack == f.dst_rack) {
      throw ValidationError("flow " + std::to_string(f.flow_id) + " has invalid racks");
    }
    if (f.bytes == 0) throw ValidationError("flow " + std::to_string(f.flow_id) + " is empty");
    if (f.arrival_s < last) throw ValidationError("trace is not sorted by arrival time");
    last = f.arrival_s;
  }
  reset();
}

StepReport Simulator::reset() {
  topology_.set_active_optical(std::span<const int>{});
  now_ = 0.0;
  step_index_ = 0;
  next_arrival_ = 0;
  active_.clear();
  completed_.clear();
  total_transferred_ = 0.0;
  switching_links_.clear();
  switching_until_ = 0.0;
  route_cache_.assign(topology_.rack_count() * topology_.rack_count(), {});
  TrafficMatrix traffic;
  traffic.window_start = 0.0;
  traffic.window_end = 0.0;
  traffic.racks = topology_.rack_count();
  traffic.cells.assign(traffic.racks * traffic.racks, 0.0);
  return make_report(0.0, std::move(traffic), {}, 0.0);
}

bool Simulator::done() const { return next_arrival_ >= trace_->size() && active_.empty(); }

const std::vector<Simulator::RoutedPath>& Simulator::routes(int src_rack, int dst_rack) {
  auto& slot = route_cache_[static_cast<std::size_t>(src_rack) * topology_.rack_count() +
                            static_cast<std::size_t>(dst_rack)];
  if (slot.empty()) {
    for (Path& p : topology_.ecmp_paths(src_rack, dst_rack)) {
      RoutedPath routed;
      routed.links = topology_.path_links(p);
      routed.nodes = std::move(p);
      slot.push_back(std::move(routed));
    }
  }
  return slot;
}

void Simulator::pin(FlowState& flow) {
  const auto& options = routes(flow.record.src_rack, flow.record.dst_rack);
  const RoutedPath& chosen = options[ecmp_hash(flow.record.flow_id) % options.size()];
  flow.path = chosen.nodes;
  flow.links = chosen.links;
}

bool Simulator::apply_action(std::span<const int> chosen) {
  const std::vector<int> before = topology_.active_optical();
  const bool changed = topology_.set_active_optical(chosen);
  if (!changed) return false;

  route_cache_.assign(topology_.rack_count() * topology_.rack_count(), {});
  for (FlowState& flow : active_) pin(flow);

  if (config_.switch_delay > 0.0) {
    const std::vector<int> after = topology_.active_optical();
    switching_links_.clear();
    std::vector<int> toggled;
    std::set_symmetric_difference(before.begin(), before.end(), after.begin(), after.end(),
                                  std::back_inserter(toggled));
    for (int c : toggled) switching_links_.push_back(topology_.optical_link(c));
    switching_until_ = now_ + config_.switch_delay;
  }
  return true;
}

std::vector<double> Simulator::current_rates(double at) const {
  const auto& links = topology_.links();
  std::vector<double> capacity(links.size());
  for (std::size_t l = 0; l < links.size(); ++l) {
    capacity[l] = links[l].active ? links[l].capacity_bps : 0.0;
  }
  if (at < switching_until_) {
    for (int l : switching_links_) capacity[static_cast<std::size_t>(l)] = 0.0;
  }
  std::vector<std::vector<int>> flow_links;
  flow_links.reserve(active_.size());
  for (const FlowState& f : active_) flow_links.push_back(f.links);
  return max_min_rates(flow_links, capacity);
}

StepReport Simulator::step() {
  if (done()) throw StateError("step() called on a finished simulation");

  const double start = now_;
  const double end = static_cast<double>(step_index_ + 1) * config_.step_seconds;
  const auto& trace = *trace_;

  std::vector<RewardTerm> terms;
  std::vector<RackTransfer> transfers;
  std::vector<CompletedFlow> finished;
  double step_bytes = 0.0;

  for (FlowState& f : active_) f.transferred_this_step = 0.0;

  auto retire = [&](const FlowState& f, double duration) {
    terms.push_back({static_cast<int>(f.links.size()), f.transferred_this_step, duration});
    transfers.push_back({f.record.src_rack, f.record.dst_rack, f.transferred_this_step});
  };

  double cur = start;
  while (true) {
    while (next_arrival_ < trace.size() && trace[next_arrival_].arrival_s <= cur &&
           trace[next_arrival_].arrival_s < end) {
      FlowState flow;
      flow.record = trace[next_arrival_];
      flow.remaining = static_cast<double>(flow.record.bytes);
      flow.start_time = flow.record.arrival_s;
      pin(flow);
      active_.push_back(std::move(flow));
      ++next_arrival_;
    }
    if (cur >= end) break;

    const std::vector<double> rates = current_rates(cur);
    double next = end;
    if (next_arrival_ < trace.size() && trace[next_arrival_].arrival_s < next) {
      next = trace[next_arrival_].arrival_s;
    }
    if (cur < switching_until_ && switching_until_ < next) next = switching_until_;
    std::vector<double> depletion(active_.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < active_.size(); ++i) {
      active_[i].rate_bps = rates[i];
      if (rates[i] > 0.0) {
        depletion[i] = cur + active_[i].remaining * 8.0 / rates[i];
        next = std::min(next, depletion[i]);
      }
    }

    const double dt = next - cur;
    std::vector<FlowState> still;
    still.reserve(active_.size());
    for (std::size_t i = 0; i < active_.size(); ++i) {
      FlowState& f = active_[i];
      double moved = 0.0;
      if (depletion[i] <= next) {
        moved = f.remaining;
        f.remaining = 0.0;
        f.finish_time = depletion[i];
      } else {
        moved = std::min(f.remaining, rates[i] * dt / 8.0);
        f.remaining -= moved;
      }
      f.transferred_this_step += moved;
      f.transferred_total += moved;
      step_bytes += moved;
      if (f.finish_time) {
        const double fct = *f.finish_time - f.record.arrival_s;
        retire(f, *f.finish_time - f.start_time);
        finished.push_back({f.record.flow_id, f.record.arrival_s, fct, f.record.bytes});
      } else {
        still.push_back(std::move(f));
      }
    }
    active_ = std::move(still);
    cur = next;
  }

  for (const FlowState& f : active_) retire(f, end - f.start_time);

  const double reward = compute_reward(terms, config_.reward_per_link);
  TrafficMatrix traffic =
      traffic_matrix(transfers, start, end, static_cast<int>(topology_.rack_count()));

  now_ = end;
  ++step_index_;
  total_transferred_ += step_bytes;
  completed_.insert(completed_.end(), finished.begin(), finished.end());
  return make_report(reward, std::move(traffic), std::move(finished), step_bytes);
}

StepReport Simulator::make_report(double reward, TrafficMatrix traffic,
                                  std::vector<CompletedFlow> done_now, double bytes) const {
  StepReport report;
  report.step_index = step_index_;
  report.time = now_;
  report.reward = reward;
  report.traffic = std::move(traffic);
  report.adjacency = topology_.adjacency_state();
  report.completed = std::move(done_now);
  report.active_flow_count = active_.size();
  report.bytes_transferred = bytes;
  report.done = done();
  return report;
}

FctSummary Simulator::fct_summary() const {
  FctSummary summary;
  summary.flows = completed_;
  std::sort(summary.flows.begin(), summary.flows.end(),
            [](const CompletedFlow& a, const CompletedFlow& b) { return a.flow_id < b.flow_id; });
  std::vector<double> fcts;
  fcts.reserve(summary.flows.size());
  for (const CompletedFlow& c : summary.flows) fcts.push_back(c.fct_s);
  summary.median = median_of(std::move(fcts));
  return summary;
}

void write_fct_csv(std::ostream& out, const FctSummary& summary) {
  out << "flow_id,arrival_s,fct_s,bytes\n";
  for (const CompletedFlow& c : summary.flows) {
    out << c.flow_id << ',' << format_double(c.arrival_s) << ',' << format_double(c.fct_s) << ','
        << c.bytes << '\n';
  }
}

std::string step_report_json(const StepReport& report) {
  nlohmann::json doc;
  doc["step"] = report.step_index;
  doc["time"] = report.time;
  doc["reward"] = report.reward;
  doc["active_flows"] = report.active_flow_count;
  doc["bytes"] = report.bytes_transferred;
  doc["done"] = report.done;
  doc["traffic_matrix"] = report.traffic.cells;
  doc["adjacency"] = report.adjacency.cells;
  auto& completed = doc["completed"] = nlohmann::json::array();
  for (const CompletedFlow& c : report.completed) {
    completed.push_back({{"flow_id", c.flow_id}, {"fct_s", c.fct_s}});
  }
  return doc.dump();
}

}  // namespace topoaug
