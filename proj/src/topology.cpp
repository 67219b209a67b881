#include "topoaug/topology.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include <json.hpp>

#include "topoaug/error.hpp"

namespace topoaug {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::host: return "host";
    case NodeKind::edge: return "edge";
    case NodeKind::aggregation: return "aggregation";
    case NodeKind::core: return "core";
    case NodeKind::optical: return "optical";
  }
  return "?";
}

const char* to_string(LinkKind kind) {
  return kind == LinkKind::ethernet ? "ethernet" : "optical";
}

RackPair make_rack_pair(int a, int b) {
  return a < b ? RackPair{a, b} : RackPair{b, a};
}

int Topology::add_node(NodeKind kind) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({index, kind});
  incident_.emplace_back();
  return index;
}

void Topology::add_link(int u, int v, double capacity, LinkKind kind, bool active) {
  if (u == v) throw ParameterError("self-loop on node " + std::to_string(u));
  if (!(capacity > 0.0)) throw ParameterError("link capacity must be positive");
  Link link{std::min(u, v), std::max(u, v), capacity, kind, active};
  const int index = static_cast<int>(links_.size());
  links_.push_back(link);
  incident_[static_cast<std::size_t>(u)].push_back(index);
  incident_[static_cast<std::size_t>(v)].push_back(index);
}

void Topology::finish(const TopologyOptions& options) {
  if (options.budget < 1) throw ParameterError("optical budget must be a positive integer");
  budget_ = options.budget;
  optical_matching_ = options.optical_matching;
  if (options.optical_overlay) {
    if (!(options.optical_bps > 0.0)) throw ParameterError("optical capacity must be positive");
    add_node(NodeKind::optical);
    for (std::size_t i = 0; i < racks_.size(); ++i) {
      for (std::size_t j = i + 1; j < racks_.size(); ++j) {
        candidates_.push_back({static_cast<int>(i), static_cast<int>(j)});
        optical_links_.push_back(static_cast<int>(links_.size()));
        add_link(racks_[i], racks_[j], options.optical_bps, LinkKind::optical, false);
      }
    }
  }
  for (auto& inc : incident_) {
    std::sort(inc.begin(), inc.end());
  }
  // Order incident links by the neighbour they lead to so that traversals
  // visit neighbours in ascending index order.
  for (std::size_t n = 0; n < incident_.size(); ++n) {
    const int self = static_cast<int>(n);
    std::stable_sort(incident_[n].begin(), incident_[n].end(), [&](int x, int y) {
      const Link& lx = links_[static_cast<std::size_t>(x)];
      const Link& ly = links_[static_cast<std::size_t>(y)];
      const int nx = lx.a == self ? lx.b : lx.a;
      const int ny = ly.a == self ? ly.b : ly.a;
      return nx < ny;
    });
  }
}

Topology build_fattree(int k, const TopologyOptions& options) {
  if (k < 2 || k % 2 != 0) {
    throw ParameterError("fat-tree arity k must be even and >= 2, got " + std::to_string(k));
  }
  if (!(options.ethernet_bps > 0.0)) throw ParameterError("ethernet capacity must be positive");
  const int half = k / 2;
  const int num_edge = k * half;
  const int num_agg = k * half;
  const int num_core = half * half;
  const int num_hosts = num_edge * half;

  Topology topo;
  std::vector<int> hosts, edges, aggs, cores;
  for (int i = 0; i < num_hosts; ++i) hosts.push_back(topo.add_node(NodeKind::host));
  for (int i = 0; i < num_edge; ++i) edges.push_back(topo.add_node(NodeKind::edge));
  for (int i = 0; i < num_agg; ++i) aggs.push_back(topo.add_node(NodeKind::aggregation));
  for (int i = 0; i < num_core; ++i) cores.push_back(topo.add_node(NodeKind::core));
  topo.racks_ = edges;

  const double cap = options.ethernet_bps;
  for (int h = 0; h < num_hosts; ++h) {
    topo.add_link(hosts[h], edges[h / half], cap, LinkKind::ethernet, true);
  }
  for (int pod = 0; pod < k; ++pod) {
    for (int e = 0; e < half; ++e) {
      for (int a = 0; a < half; ++a) {
        topo.add_link(edges[pod * half + e], aggs[pod * half + a], cap, LinkKind::ethernet, true);
      }
    }
  }
  for (int pod = 0; pod < k; ++pod) {
    for (int a = 0; a < half; ++a) {
      for (int c = 0; c < half; ++c) {
        topo.add_link(aggs[pod * half + a], cores[a * half + c], cap, LinkKind::ethernet, true);
      }
    }
  }
  topo.finish(options);
  return topo;
}

Topology build_vl2(int num_tor, int num_agg, int num_int, int hosts_per_tor,
                   const TopologyOptions& options) {
  if (num_tor < 1 || num_int < 1 || hosts_per_tor < 1) {
    throw ParameterError("VL2 switch and host counts must be positive");
  }
  if (num_agg < 2 || num_agg % 2 != 0) {
    throw ParameterError("VL2 needs an even number (>= 2) of aggregation switches, got " +
                         std::to_string(num_agg));
  }
  if (!(options.ethernet_bps > 0.0)) throw ParameterError("ethernet capacity must be positive");

  Topology topo;
  std::vector<int> hosts, tors, aggs, ints;
  for (int i = 0; i < num_tor * hosts_per_tor; ++i) hosts.push_back(topo.add_node(NodeKind::host));
  for (int i = 0; i < num_tor; ++i) tors.push_back(topo.add_node(NodeKind::edge));
  for (int i = 0; i < num_agg; ++i) aggs.push_back(topo.add_node(NodeKind::aggregation));
  for (int i = 0; i < num_int; ++i) ints.push_back(topo.add_node(NodeKind::core));
  topo.racks_ = tors;

  const double cap = options.ethernet_bps;
  for (std::size_t h = 0; h < hosts.size(); ++h) {
    topo.add_link(hosts[h], tors[h / static_cast<std::size_t>(hosts_per_tor)], cap,
                  LinkKind::ethernet, true);
  }
  // ToRs dual-home onto an aggregation pair, pairs assigned round-robin.
  const int pairs = num_agg / 2;
  for (int t = 0; t < num_tor; ++t) {
    const int p = t % pairs;
    topo.add_link(tors[t], aggs[2 * p], cap, LinkKind::ethernet, true);
    topo.add_link(tors[t], aggs[2 * p + 1], cap, LinkKind::ethernet, true);
  }
  for (int a = 0; a < num_agg; ++a) {
    for (int i = 0; i < num_int; ++i) {
      topo.add_link(aggs[a], ints[i], cap, LinkKind::ethernet, true);
    }
  }
  topo.finish(options);
  return topo;
}

int Topology::candidate_index(RackPair pair) const {
  const auto it = std::lower_bound(candidates_.begin(), candidates_.end(), pair);
  if (it == candidates_.end() || *it != pair) return -1;
  return static_cast<int>(it - candidates_.begin());
}

std::vector<int> Topology::active_optical() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < optical_links_.size(); ++c) {
    if (links_[static_cast<std::size_t>(optical_links_[c])].active) out.push_back(static_cast<int>(c));
  }
  return out;
}

std::size_t Topology::active_optical_count() const { return active_optical().size(); }

bool Topology::set_active_optical(std::span<const int> chosen) {
  std::set<int> wanted;
  for (int c : chosen) {
    if (c < 0 || static_cast<std::size_t>(c) >= candidates_.size()) {
      throw ParameterError("optical link " + std::to_string(c) + " is not a candidate");
    }
    wanted.insert(c);
  }
  if (wanted.size() > static_cast<std::size_t>(budget_)) {
    throw BudgetError("requested " + std::to_string(wanted.size()) +
                      " optical links but the budget is " + std::to_string(budget_));
  }
  if (optical_matching_) {
    std::vector<int> used(racks_.size(), 0);
    for (int c : wanted) {
      const RackPair& p = candidates_[static_cast<std::size_t>(c)];
      if (++used[static_cast<std::size_t>(p.first)] > 1 ||
          ++used[static_cast<std::size_t>(p.second)] > 1) {
        throw ParameterError("optical matching mode allows one active optical link per rack");
      }
    }
  }
  bool changed = false;
  for (std::size_t c = 0; c < optical_links_.size(); ++c) {
    Link& link = links_[static_cast<std::size_t>(optical_links_[c])];
    const bool on = wanted.count(static_cast<int>(c)) > 0;
    changed = changed || link.active != on;
    link.active = on;
  }
  return changed;
}

bool Topology::set_active_optical(std::span<const RackPair> chosen) {
  std::vector<int> indices;
  indices.reserve(chosen.size());
  for (const RackPair& p : chosen) {
    const int c = candidate_index(make_rack_pair(p.first, p.second));
    if (c < 0) {
      throw ParameterError("rack pair (" + std::to_string(p.first) + "," + std::to_string(p.second) +
                           ") is not a candidate optical link");
    }
    indices.push_back(c);
  }
  return set_active_optical(std::span<const int>(indices));
}

int Topology::active_link_between(int u, int v) const {
  for (int l : incident_.at(static_cast<std::size_t>(u))) {
    const Link& link = links_[static_cast<std::size_t>(l)];
    if (link.active && (link.a == v || link.b == v)) return l;
  }
  return -1;
}

std::vector<int> Topology::hop_distances(int from) const {
  std::vector<int> dist(nodes_.size(), -1);
  std::queue<int> frontier;
  dist[static_cast<std::size_t>(from)] = 0;
  frontier.push(from);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int l : incident_[static_cast<std::size_t>(u)]) {
      const Link& link = links_[static_cast<std::size_t>(l)];
      if (!link.active) continue;
      const int v = link.a == u ? link.b : link.a;
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        frontier.push(v);
      }
    }
  }
  return dist;
}

std::vector<Path> Topology::ecmp_paths(int src_rack, int dst_rack) const {
  if (src_rack == dst_rack) throw ParameterError("ECMP source and destination racks coincide");
  if (src_rack < 0 || dst_rack < 0 || static_cast<std::size_t>(src_rack) >= racks_.size() ||
      static_cast<std::size_t>(dst_rack) >= racks_.size()) {
    throw ParameterError("rack index out of range");
  }
  const int src = racks_[static_cast<std::size_t>(src_rack)];
  const int dst = racks_[static_cast<std::size_t>(dst_rack)];
  const std::vector<int> from_src = hop_distances(src);
  const std::vector<int> to_dst = hop_distances(dst);
  const int hops = from_src[static_cast<std::size_t>(dst)];
  if (hops < 0) {
    throw RoutingError("racks " + std::to_string(src_rack) + " and " + std::to_string(dst_rack) +
                       " are disconnected");
  }

  std::vector<Path> paths;
  Path current{src};
  // Depth-first over the shortest-path DAG; neighbours ascend, so output is
  // lexicographic.
  auto extend = [&](auto&& self, int u) -> void {
    if (u == dst) {
      paths.push_back(current);
      return;
    }
    const int du = from_src[static_cast<std::size_t>(u)];
    for (int l : incident_[static_cast<std::size_t>(u)]) {
      const Link& link = links_[static_cast<std::size_t>(l)];
      if (!link.active) continue;
      const int v = link.a == u ? link.b : link.a;
      if (from_src[static_cast<std::size_t>(v)] != du + 1) continue;
      if (to_dst[static_cast<std::size_t>(v)] != hops - du - 1) continue;
      current.push_back(v);
      self(self, v);
      current.pop_back();
    }
  };
  extend(extend, src);
  return paths;
}

std::vector<int> Topology::path_links(const Path& path) const {
  std::vector<int> out;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const int l = active_link_between(path[i], path[i + 1]);
    if (l < 0) throw RoutingError("path uses an inactive or missing link");
    out.push_back(l);
  }
  return out;
}

AdjacencyState Topology::adjacency_state() const {
  AdjacencyState state;
  state.size = nodes_.size();
  state.cells.assign(state.size * state.size, 0.0);
  double max_cap = 0.0;
  for (const Link& link : links_) max_cap = std::max(max_cap, link.capacity_bps);
  for (const Link& link : links_) {
    if (!link.active) continue;
    const double v = link.capacity_bps / max_cap;
    state.cells[static_cast<std::size_t>(link.a) * state.size + static_cast<std::size_t>(link.b)] = v;
    state.cells[static_cast<std::size_t>(link.b) * state.size + static_cast<std::size_t>(link.a)] = v;
  }
  return state;
}

bool Topology::ethernet_connected() const {
  std::vector<int> hosts;
  for (const Node& n : nodes_) {
    if (n.kind == NodeKind::host) hosts.push_back(n.index);
  }
  if (hosts.empty()) return true;
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<int> stack{hosts.front()};
  seen[static_cast<std::size_t>(hosts.front())] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int l : incident_[static_cast<std::size_t>(u)]) {
      const Link& link = links_[static_cast<std::size_t>(l)];
      if (link.kind != LinkKind::ethernet) continue;
      const int v = link.a == u ? link.b : link.a;
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = true;
        stack.push_back(v);
      }
    }
  }
  return std::all_of(hosts.begin(), hosts.end(),
                     [&](int h) { return seen[static_cast<std::size_t>(h)]; });
}

std::string Topology::to_json() const {
  nlohmann::json doc;
  doc["budget"] = budget_;
  doc["optical_matching"] = optical_matching_;
  auto& nodes = doc["nodes"] = nlohmann::json::array();
  for (const Node& n : nodes_) nodes.push_back({{"index", n.index}, {"kind", to_string(n.kind)}});
  auto& links = doc["links"] = nlohmann::json::array();
  for (const Link& l : links_) {
    links.push_back({{"a", l.a},
                     {"b", l.b},
                     {"capacity_bps", l.capacity_bps},
                     {"kind", to_string(l.kind)},
                     {"active", l.active}});
  }
  doc["racks"] = racks_;
  return doc.dump(2);
}

}  // namespace topoaug
