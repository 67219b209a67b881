#pragma once

// Independent re-implementations used as oracles by the tests. Nothing here
// shares code with the library beyond topology path enumeration and the
// documented ECMP hash.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "topoaug/simulator.hpp"
#include "topoaug/topology.hpp"
#include "topoaug/workload.hpp"

namespace ref {

// Water-filling by repeatedly finding the most constrained link: every link's
// fair share is its leftover capacity split over its unfixed flows; the
// smallest share fixes all of that link's flows.
inline std::vector<double> water_fill(const std::vector<std::vector<int>>& flows,
                                      const std::vector<double>& caps) {
  const std::size_t n = flows.size();
  std::vector<double> rate(n, 0.0);
  std::vector<bool> fixed(n, false);
  for (std::size_t f = 0; f < n; ++f) {
    if (flows[f].empty()) fixed[f] = true;
  }
  std::vector<double> left = caps;
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    int best_link = -1;
    for (std::size_t l = 0; l < caps.size(); ++l) {
      int users = 0;
      for (std::size_t f = 0; f < n; ++f) {
        if (!fixed[f] && std::count(flows[f].begin(), flows[f].end(), static_cast<int>(l))) ++users;
      }
      if (users == 0) continue;
      const double share = std::max(0.0, left[l]) / users;
      if (share < best) {
        best = share;
        best_link = static_cast<int>(l);
      }
    }
    if (best_link < 0) break;
    for (std::size_t f = 0; f < n; ++f) {
      if (fixed[f] || !std::count(flows[f].begin(), flows[f].end(), best_link)) continue;
      fixed[f] = true;
      rate[f] = best;
      for (int l : flows[f]) left[static_cast<std::size_t>(l)] -= best;
    }
  }
  return rate;
}

// True when no flow can be raised without lowering a flow of equal or lower
// rate: every flow has a saturated link on which it is among the fastest.
inline bool is_max_min(const std::vector<std::vector<int>>& flows, const std::vector<double>& caps,
                       const std::vector<double>& rate, double tol = 1e-9) {
  std::vector<double> load(caps.size(), 0.0);
  for (std::size_t f = 0; f < flows.size(); ++f) {
    for (int l : flows[f]) load[static_cast<std::size_t>(l)] += rate[f];
  }
  for (std::size_t l = 0; l < caps.size(); ++l) {
    if (load[l] > caps[l] * (1 + tol) + tol) return false;
  }
  for (std::size_t f = 0; f < flows.size(); ++f) {
    if (flows[f].empty()) continue;
    bool bottlenecked = false;
    for (int l : flows[f]) {
      const auto L = static_cast<std::size_t>(l);
      if (load[L] < caps[L] * (1 - tol) - tol) continue;
      bool fastest = true;
      for (std::size_t g = 0; g < flows.size(); ++g) {
        if (std::count(flows[g].begin(), flows[g].end(), l) && rate[g] > rate[f] * (1 + tol) + tol) {
          fastest = false;
        }
      }
      if (fastest) bottlenecked = true;
    }
    if (!bottlenecked) return false;
  }
  return true;
}

struct Result {
  std::map<std::uint64_t, double> finish;           // flow id -> finish time
  std::vector<double> step_bytes;                    // bytes moved per step
  std::vector<std::map<std::pair<int, int>, double>> pair_bytes;  // per step, (src,dst) -> bytes
};

// Fluid simulation of `trace` over `actions.size()` steps (or until drained
// when actions run out, keeping the last action). Time advances from event to
// event: arrivals, completions, step boundaries.
inline Result simulate(topoaug::Topology topo, const std::vector<topoaug::FlowRecord>& trace, double step,
                       const std::vector<std::vector<int>>& actions, std::size_t max_steps = 100000) {
  struct Live {
    topoaug::FlowRecord rec;
    double left;
    std::vector<int> links;
  };
  auto route = [&topo](const topoaug::FlowRecord& r) {
    const auto paths = topo.ecmp_paths(r.src_rack, r.dst_rack);
    return topo.path_links(paths[topoaug::ecmp_hash(r.flow_id) % paths.size()]);
  };
  Result out;
  std::vector<Live> live;
  std::size_t next = 0;
  std::vector<int> current;
  for (std::size_t s = 0; s < max_steps; ++s) {
    if (next >= trace.size() && live.empty()) break;
    const std::vector<int>& act = actions.empty() ? current : actions[std::min(s, actions.size() - 1)];
    if (act != current || s == 0) {
      topo.set_active_optical(act);
      current = act;
      for (Live& f : live) f.links = route(f.rec);
    }
    const double t0 = static_cast<double>(s) * step;
    const double t1 = static_cast<double>(s + 1) * step;
    double now = t0;
    double moved_total = 0.0;
    std::map<std::pair<int, int>, double> pairs;
    std::vector<double> caps;
    for (const auto& l : topo.links()) caps.push_back(l.active ? l.capacity_bps / 8.0 : 0.0);
    while (true) {
      while (next < trace.size() && trace[next].arrival_s <= now && trace[next].arrival_s < t1) {
        live.push_back({trace[next], static_cast<double>(trace[next].bytes), route(trace[next])});
        ++next;
      }
      if (now >= t1) break;
      std::vector<std::vector<int>> paths;
      for (const Live& f : live) paths.push_back(f.links);
      const std::vector<double> r = water_fill(paths, caps);
      double until = t1;
      if (next < trace.size()) until = std::min(until, trace[next].arrival_s);
      for (std::size_t i = 0; i < live.size(); ++i) {
        if (r[i] > 0) until = std::min(until, now + live[i].left / r[i]);
      }
      std::vector<Live> keep;
      for (std::size_t i = 0; i < live.size(); ++i) {
        const double finish = r[i] > 0 ? now + live[i].left / r[i] : std::numeric_limits<double>::infinity();
        double moved;
        if (finish <= until) {
          moved = live[i].left;
          out.finish[live[i].rec.flow_id] = finish;
        } else {
          moved = std::min(live[i].left, r[i] * (until - now));
        }
        live[i].left -= moved;
        moved_total += moved;
        pairs[{live[i].rec.src_rack, live[i].rec.dst_rack}] += moved;
        if (finish > until) keep.push_back(live[i]);
      }
      live = std::move(keep);
      now = until;
    }
    out.step_bytes.push_back(moved_total);
    out.pair_bytes.push_back(pairs);
  }
  return out;
}

struct MicroInstance {
  topoaug::Topology topo;
  std::vector<topoaug::FlowRecord> trace;
  std::vector<std::vector<int>> actions;
};

// At most five flows over at most six traffic-carrying links. Even trials use
// three racks dual-homed to two aggregation switches with no optical overlay
// (six links); odd trials use two racks plus one switchable optical link
// (five links) so that re-pinning on topology changes is exercised.
template <typename Rng>
MicroInstance micro_instance(Rng& rng, int trial) {
  topoaug::TopologyOptions opts;
  opts.budget = 1;
  const bool optical = trial % 2 == 1;
  opts.optical_overlay = optical;
  const int racks = optical ? 2 : 3;
  MicroInstance m{topoaug::build_vl2(racks, 2, 1, 1, opts), {}, {}};
  const int n = 1 + static_cast<int>(rng() % 5);
  for (int i = 0; i < n; ++i) {
    const int a = static_cast<int>(rng() % static_cast<unsigned>(racks));
    const int b = (a + 1 + static_cast<int>(rng() % static_cast<unsigned>(racks - 1))) % racks;
    m.trace.push_back({static_cast<std::uint64_t>(i), 0.1 * static_cast<double>(rng() % 15), a, b,
                       1'000'000 * (1 + rng() % 300)});
  }
  std::stable_sort(m.trace.begin(), m.trace.end(),
                   [](const topoaug::FlowRecord& x, const topoaug::FlowRecord& y) { return x.arrival_s < y.arrival_s; });
  for (int s = 0; s < 8; ++s) {
    m.actions.push_back(optical && rng() % 2 ? std::vector<int>{0} : std::vector<int>{});
  }
  return m;
}

}  // namespace ref
